"""Neural building blocks: vocabulary, embedding providers, the one-layer
BiLSTM encoder (hidden size 50 per direction by default) and two-layer MLP
heads used as projector, predictor, classifier and transfer projections.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from causerl.errors import (
    EmptySequenceError,
    OutOfVocabError,
    ShapeMismatchError,
    SpanOutOfRangeError,
)
from causerl import tensor as T
from causerl.tensor import Tensor

PAD = 0
UNK = 1


@dataclass
class Vocabulary:
    """Token <-> index map with reserved PAD (0) and UNK (1) slots."""

    token_to_index: dict[str, int] = field(default_factory=dict)
    index_to_token: list[str] = field(default_factory=lambda: ["<pad>", "<unk>"])

    @classmethod
    def from_tokens(cls, tokens) -> "Vocabulary":
        vocab = cls()
        for tok in sorted(set(tokens)):
            vocab.add(tok)
        return vocab

    def add(self, token: str) -> int:
        idx = self.token_to_index.get(token)
        if idx is None:
            idx = len(self.index_to_token)
            self.token_to_index[token] = idx
            self.index_to_token.append(token)
        return idx

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_index.get(tok, UNK) for tok in tokens]

    def __len__(self) -> int:
        return len(self.index_to_token)

    def to_list(self) -> list[str]:
        return list(self.index_to_token[2:])

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocabulary":
        vocab = cls()
        for tok in tokens:
            vocab.add(tok)
        return vocab


class EmbeddingTable:
    """Trainable token embedding matrix (the identifier's featurizer)."""

    trainable = True

    def __init__(self, vocab_size: int, d_emb: int, rng: np.random.Generator,
                 sigma: float = 0.1):
        self.matrix = Tensor(rng.normal(0.0, sigma, size=(vocab_size, d_emb)),
                             requires_grad=self.trainable)
        self.d_emb = d_emb

    def parameters(self) -> list[Tensor]:
        return [self.matrix]

    def named_parameters(self, prefix: str = "emb") -> dict[str, Tensor]:
        return {f"{prefix}.matrix": self.matrix}

    def set_trainable(self, flag: bool) -> None:
        self.matrix.requires_grad = flag
        self.matrix.grad = np.zeros_like(self.matrix.data) if flag else None

    def checksum(self) -> str:
        return hashlib.sha256(self.matrix.data.tobytes()).hexdigest()


class FrozenEmbeddingProvider(EmbeddingTable):
    """Fixed random-Gaussian featurizer standing in for a frozen pretrained
    encoder: it only provides initial token representations and its values
    never receive gradient updates."""

    trainable = False


def embed(token_ids: list[int], provider: EmbeddingTable) -> Tensor:
    """Look up embeddings for a token id sequence -> (len, d_emb)."""
    if len(token_ids) == 0:
        raise EmptySequenceError("cannot embed an empty token sequence")
    n = provider.matrix.data.shape[0]
    for idx in token_ids:
        if not 0 <= idx < n:
            raise OutOfVocabError(f"token index {idx} outside vocab of {n}")
    return T.gather_rows(provider.matrix, token_ids)


class BiLSTMEncoder:
    """One-layer bidirectional LSTM; output per token is the concatenation
    of the forward and backward hidden states (2h)."""

    def __init__(self, d_emb: int, hidden: int, rng: np.random.Generator):
        self.d_emb = d_emb
        self.hidden = hidden
        k = 1.0 / np.sqrt(hidden)

        def u(shape):
            return Tensor(rng.uniform(-k, k, size=shape), requires_grad=True)

        self.wx_f = u((d_emb, 4 * hidden))
        self.wh_f = u((hidden, 4 * hidden))
        self.b_f = u((4 * hidden,))
        self.wx_b = u((d_emb, 4 * hidden))
        self.wh_b = u((hidden, 4 * hidden))
        self.b_b = u((4 * hidden,))

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def parameters(self) -> list[Tensor]:
        return [self.wx_f, self.wh_f, self.b_f, self.wx_b, self.wh_b, self.b_b]

    def named_parameters(self, prefix: str = "enc") -> dict[str, Tensor]:
        names = ["wx_f", "wh_f", "b_f", "wx_b", "wh_b", "b_b"]
        return {f"{prefix}.{n}": p for n, p in zip(names, self.parameters())}

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag
            p.grad = np.zeros_like(p.data) if flag else None

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for p in self.parameters():
            digest.update(p.data.tobytes())
        return digest.hexdigest()


def encode_sequence(emb: Tensor, enc: BiLSTMEncoder) -> Tensor:
    """(len, d_emb) -> (len, 2h) per-token encodings."""
    if emb.data.ndim != 2 or emb.data.shape[1] != enc.d_emb:
        raise ShapeMismatchError(
            f"encoder expects (len, {enc.d_emb}), got {emb.shape}")
    fwd = T.lstm_seq(emb, enc.wx_f, enc.wh_f, enc.b_f, reverse=False)
    bwd = T.lstm_seq(emb, enc.wx_b, enc.wh_b, enc.b_b, reverse=True)
    return T.concat_cols(fwd, bwd)


def pool_statement(per_token: Tensor, mode: str = "mean") -> Tensor:
    """Pool per-token encodings into one statement vector."""
    if mode != "mean":
        raise ValueError(f"unknown pooling mode {mode!r}")
    if per_token.data.ndim != 2 or per_token.data.shape[0] == 0:
        raise EmptySequenceError("nothing to pool")
    return T.mean_rows(per_token)


def pool_event_span(per_token: Tensor, span: tuple[int, int]) -> Tensor:
    """Mean-pool the token vectors of one event span [start, end)."""
    start, end = span
    length = per_token.data.shape[0]
    if not (0 <= start < end <= length):
        raise SpanOutOfRangeError(f"span [{start}, {end}) in length {length}")
    return T.mean_rows(T.slice_rows(per_token, start, end))


class MLPHead:
    """Two affine layers with a tanh in between. Used for the projector,
    predictor, classifier and both transfer-space projections."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int,
                 rng: np.random.Generator):
        self.d_in, self.d_hidden, self.d_out = d_in, d_hidden, d_out
        k1 = 1.0 / np.sqrt(d_in)
        k2 = 1.0 / np.sqrt(d_hidden)
        self.w1 = Tensor(rng.uniform(-k1, k1, size=(d_in, d_hidden)),
                         requires_grad=True)
        self.b1 = Tensor(rng.uniform(-k1, k1, size=(d_hidden,)),
                         requires_grad=True)
        self.w2 = Tensor(rng.uniform(-k2, k2, size=(d_hidden, d_out)),
                         requires_grad=True)
        self.b2 = Tensor(rng.uniform(-k2, k2, size=(d_out,)),
                         requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def named_parameters(self, prefix: str = "head") -> dict[str, Tensor]:
        names = ["w1", "b1", "w2", "b2"]
        return {f"{prefix}.{n}": p for n, p in zip(names, self.parameters())}


def apply_head(x: Tensor, head: MLPHead) -> Tensor:
    if x.data.shape[-1] != head.d_in:
        raise ShapeMismatchError(
            f"head expects input dim {head.d_in}, got {x.shape}")
    hidden = T.tanh(T.add(T.matmul(x, head.w1), head.b1))
    return T.add(T.matmul(hidden, head.w2), head.b2)
