"""Dense float64 tensors with tape-based reverse-mode differentiation.

Design:

* ``Tensor`` is a thin wrapper over a C-contiguous float64 ndarray plus a
  gradient slot.
* Operations executed while a ``Tape`` is active append records (output,
  inputs, backward rule); ``backward()`` replays the records in reverse
  execution order, accumulating each tensor's gradient exactly once per use.
* ``detach()`` is the stop-gradient boundary: the detached tensor shares
  values but contributes nothing to upstream gradients.

Everything is single-threaded per tape; distinct training runs must use
distinct tapes and parameters.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from causerl import kernels
from causerl.errors import (
    NonFiniteInputError,
    NotScalarError,
    ShapeMismatchError,
    ZeroNormError,
)

NORM_EPS = 1e-12

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed operations for one backward pass."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPE_STACK.pop()
        return False

    def backward(self, loss: "Tensor") -> None:
        if loss.data.ndim != 0:
            raise NotScalarError(f"loss must be a scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}
        holders: dict[int, Tensor] = {id(loss): loss}
        for out, inputs, rule in reversed(self.records):
            g = grads.get(id(out))
            if g is None:
                continue
            for tensor, contrib in rule(g):
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = np.asarray(contrib, dtype=np.float64)
                    holders[key] = tensor
        for key, tensor in holders.items():
            if tensor.requires_grad:
                tensor.grad += grads[key].reshape(tensor.data.shape)


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        """Stop-gradient: same values, no link back into the tape."""
        return Tensor(self.data.copy())

    def backward(self) -> None:
        if self.data.ndim != 0:
            raise NotScalarError(f"loss must be a scalar, got shape {self.shape}")
        if self._tape is None:
            raise RuntimeError("tensor was not produced on an active tape")
        self._tape.backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars mean python floats, not 0-d tensors
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    def __radd__(self, other):
        return add_scalar(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else mul_scalar(self, other)

    def __rmul__(self, other):
        return mul_scalar(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive; "
                            "multiply by a reciprocal scalar instead")
        return mul_scalar(self, 1.0 / other)

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], rule: Callable) -> Tensor:
    """Create the op output, recording it when grad tracking applies."""
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        out._tape = tape
        tape.records.append((out, tuple(inputs), rule))
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"{op}: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _record(a.data + b.data, (a, b),
                   lambda g: [(a, g), (b, g)])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _record(a.data - b.data, (a, b),
                   lambda g: [(a, g), (b, -g)])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return _record(a.data * b.data, (a, b),
                   lambda g: [(a, g * b.data), (b, g * a.data)])


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _record(a.data + c, (a,), lambda g: [(a, g)])


def mul_scalar(a: Tensor, c: float) -> Tensor:
    return _record(a.data * c, (a,), lambda g: [(a, g * c)])


def square(a: Tensor) -> Tensor:
    return _record(a.data * a.data, (a,), lambda g: [(a, 2.0 * g * a.data)])


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _record(out, (a,), lambda g: [(a, g * 0.5 / out)])


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: [(a, g * out)])


def log(a: Tensor) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: [(a, g / a.data)])


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: [(a, g * (1.0 - out * out))])


def sigmoid(a: Tensor) -> Tensor:
    out = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return _record(out, (a,), lambda g: [(a, g * out * (1.0 - out))])


def flip_grad(a: Tensor) -> Tensor:
    """Identity forward, sign-flipped backward. Exists only so mutation tests
    can inject a known-wrong backward rule into a loss surface."""
    return _record(a.data.copy(), (a,), lambda g: [(a, -g)])


# ---------------------------------------------------------------------------
# reductions and structure


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _record(np.asarray(a.data.sum()), (a,),
                   lambda g: [(a, np.broadcast_to(g, shape).copy())])


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return mul_scalar(sum_all(a), 1.0 / n)


def mean_rows(a: Tensor) -> Tensor:
    """(L, d) -> (d,): mean over the row axis."""
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"mean_rows expects rank-2, got {a.shape}")
    L = a.data.shape[0]
    return _record(a.data.mean(axis=0), (a,),
                   lambda g: [(a, np.tile(g / L, (L, 1)))])


def slice_rows(a: Tensor, start: int, end: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"slice_rows expects rank-2, got {a.shape}")

    def rule(g):
        full = np.zeros_like(a.data)
        full[start:end] = g
        return [(a, full)]

    return _record(a.data[start:end].copy(), (a,), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(L, d) @ (d, k) or (d,) @ (d, k)."""
    if b.data.ndim != 2 or a.data.ndim not in (1, 2):
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    if a.data.ndim == 1:
        return _record(a.data @ b.data, (a, b),
                       lambda g: [(a, b.data @ g), (b, np.outer(a.data, g))])
    return _record(a.data @ b.data, (a, b),
                   lambda g: [(a, g @ b.data.T), (b, a.data.T @ g)])


def dot(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "dot")
    return _record(np.asarray(a.data @ b.data), (a, b),
                   lambda g: [(a, g * b.data), (b, g * a.data)])


def concat_vec(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate rank-1 tensors into one rank-1 tensor."""
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeMismatchError("concat_vec expects rank-1 parts")
    parts = tuple(parts)
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def rule(g):
        return [(p, g[offsets[i]:offsets[i + 1]]) for i, p in enumerate(parts)]

    return _record(np.concatenate([p.data for p in parts]), parts, rule)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """(L, p) ++ (L, q) -> (L, p+q)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeMismatchError(f"concat_cols: {a.shape} vs {b.shape}")
    p = a.data.shape[1]
    return _record(np.hstack([a.data, b.data]), (a, b),
                   lambda g: [(a, g[:, :p]), (b, g[:, p:])])


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack rank-1 tensors into a (n, d) tensor."""
    parts = tuple(parts)
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeMismatchError("stack_rows expects rank-1 parts")
    return _record(np.stack([p.data for p in parts]), parts,
                   lambda g: [(p, g[i]) for i, p in enumerate(parts)])


def stack_scalars(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    for p in parts:
        if p.data.ndim != 0:
            raise ShapeMismatchError("stack_scalars expects rank-0 parts")
    return _record(np.array([p.data for p in parts]), parts,
                   lambda g: [(p, np.asarray(g[i])) for i, p in enumerate(parts)])


def gather_rows(matrix: Tensor, indices: Sequence[int]) -> Tensor:
    """Row lookup (embedding); backward scatter-adds into the matrix."""
    idx = np.asarray(indices, dtype=np.intp)

    def rule(g):
        full = np.zeros_like(matrix.data)
        np.add.at(full, idx, g)
        return [(matrix, full)]

    return _record(matrix.data[idx], (matrix,), rule)


# ---------------------------------------------------------------------------
# model-level operations


def l2_normalize(v: Tensor) -> Tensor:
    """Normalize a vector, or each row of a matrix, to unit l2 norm.

    Raises ZeroNormError when any row norm is at or below 1e-12; degenerate
    encodings are surfaced, never clamped.
    """
    if v.data.ndim == 1:
        n = float(np.linalg.norm(v.data))
        if n <= NORM_EPS:
            raise ZeroNormError(f"vector norm {n} <= {NORM_EPS}")
        out = v.data / n

        def rule(g, out=out, n=n):
            return [(v, (g - out * (out @ g)) / n)]

        return _record(out, (v,), rule)
    if v.data.ndim == 2:
        norms = np.linalg.norm(v.data, axis=1)
        if np.any(norms <= NORM_EPS):
            raise ZeroNormError(f"row norm {norms.min()} <= {NORM_EPS}")
        out = v.data / norms[:, None]

        def rule(g, out=out, norms=norms):
            proj = (out * g).sum(axis=1, keepdims=True)
            return [(v, (g - out * proj) / norms[:, None])]

        return _record(out, (v,), rule)
    raise ShapeMismatchError(f"l2_normalize expects rank 1 or 2, got {v.shape}")


def normalized_mse(y: Tensor, z: Tensor) -> Tensor:
    """Squared error between unit-normalized vectors, equal to
    2 - 2*cosine(y, z). ``z`` is the regression target and is treated as a
    constant (stop-gradient); the gradient flows into ``y`` only."""
    _same_shape(y, z, "normalized_mse")
    diff = sub(l2_normalize(y), l2_normalize(z.detach()))
    return sum_all(square(diff))


def binary_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of binary labels under sigmoid(logits).

    Stable form: max(l, 0) - l*y + log(1 + exp(-|l|)).
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != logits.data.shape:
        raise ShapeMismatchError(
            f"bce: labels {labels.shape} vs logits {logits.shape}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise NonFiniteInputError("labels must be 0 or 1")
    if not np.all(np.isfinite(logits.data)):
        raise NonFiniteInputError("logits must be finite")
    ld = logits.data
    n = ld.size
    val = np.maximum(ld, 0.0) - ld * labels + np.log1p(np.exp(-np.abs(ld)))
    p = np.where(ld >= 0, 1.0 / (1.0 + np.exp(-np.abs(ld))),
                 np.exp(-np.abs(ld)) / (1.0 + np.exp(-np.abs(ld))))
    return _record(np.asarray(val.mean()), (logits,),
                   lambda g: [(logits, g * (p - labels) / n)])


def lstm_seq(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
             reverse: bool = False) -> Tensor:
    """One LSTM direction over a (L, d) sequence; output (L, h) hidden states
    aligned to input positions. Forward and backward run in the selected
    kernel backend; the backward rule is hand-derived BPTT, checked against
    finite differences in the test suite."""
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"lstm_seq expects (L, d) input, got {x.shape}")
    d = x.data.shape[1]
    h = wh.data.shape[0]
    if wx.data.shape != (d, 4 * h) or wh.data.shape != (h, 4 * h) \
            or b.data.shape != (4 * h,):
        raise ShapeMismatchError(
            f"lstm_seq: x {x.shape}, wx {wx.shape}, wh {wh.shape}, b {b.shape}")
    hs, gates, cs = kernels.lstm_forward(x.data, wx.data, wh.data, b.data,
                                         reverse)

    def rule(g):
        dhs = np.ascontiguousarray(g)
        dx, dwx, dwh, db = kernels.lstm_backward(
            dhs, x.data, wx.data, wh.data, hs, gates, cs, reverse)
        return [(x, dx), (wx, dwx), (wh, dwh), (b, db)]

    return _record(hs, (x, wx, wh, b), rule)


def backward(loss: Tensor) -> None:
    """Populate gradients of every requires_grad tensor reachable from a
    scalar loss recorded on a tape."""
    if loss.data.ndim != 0:
        raise NotScalarError(f"loss must be a scalar, got shape {loss.shape}")
    if loss._tape is None:
        raise RuntimeError("loss was not produced on an active tape")
    loss._tape.backward(loss)
