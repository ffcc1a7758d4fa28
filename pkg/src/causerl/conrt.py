"""Stage 2 coupling: contrastive representation transfer.

The frozen stage-1 encoder (the teacher) turns a batch of external causal
statements into one anchor vector in a shared 50-dim space. Statement
representations from the identifier (the student) are projected into the
same space, and the contrastive loss pushes causal pairs' projections
toward the anchor relative to the rest of the batch.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass

import numpy as np

from causerl import tensor as T
from causerl.encoders import (
    BiLSTMEncoder,
    FrozenEmbeddingProvider,
    MLPHead,
    Vocabulary,
    embed,
    encode_sequence,
    pool_statement,
)
from causerl.errors import EmptyBatchError, NoPositivesError, ShapeMismatchError
from causerl.tensor import Tensor

# distance offset: keeps sqrt differentiable if a projection ever coincides
# with the anchor; shifts distances by < 1e-12
_DIST_EPS = 1e-24

# test hook: when true, a sign error is injected into the backward rule of
# the positive-distance term so the gradient oracle must fail
MUTATE_BACKWARD_SIGN = False


class TeacherHandle:
    """Frozen copy of a stage-1 encoder plus its embedding provider."""

    def __init__(self, enc: BiLSTMEncoder, provider: FrozenEmbeddingProvider,
                 vocab: Vocabulary):
        self.enc = copy.deepcopy(enc)
        self.enc.set_trainable(False)
        self.provider = copy.deepcopy(provider)
        self.provider.matrix.requires_grad = False
        self.provider.matrix.grad = None
        self.vocab = vocab

    @classmethod
    def from_selfrl(cls, result) -> "TeacherHandle":
        return cls(result.online.enc, result.provider, result.vocab)

    @classmethod
    def from_checkpoint(cls, path) -> "TeacherHandle":
        from causerl.checkpoint import assign_params, load_params
        from causerl.selfrl import OnlineNetwork, SelfRLConfig

        doc = load_params(path)
        vocab = Vocabulary.from_list(doc["vocab"])
        config = SelfRLConfig(d_emb=doc["d_emb"], hidden=doc["hidden"],
                              proj_dim=doc["proj_dim"])
        rng = np.random.default_rng(0)
        online = OnlineNetwork(config, rng)
        provider = FrozenEmbeddingProvider(len(vocab), config.d_emb, rng)
        named = online.named_parameters()
        named.update(provider.named_parameters("provider"))
        assign_params(named, doc["params"])
        return cls(online.enc, provider, vocab)

    def encode_statement(self, token_ids: list[int]) -> np.ndarray:
        """Pooled teacher representation; computed off-tape, the encoder is
        not part of any gradient path."""
        per_token = encode_sequence(embed(token_ids, self.provider), self.enc)
        return pool_statement(per_token).data

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.provider.matrix.data.tobytes())
        for p in self.enc.parameters():
            digest.update(p.data.tobytes())
        return digest.hexdigest()


@dataclass
class TransferSpace:
    """The shared space both sides project into, plus the temperature."""

    student_head: MLPHead
    teacher_head: MLPHead
    temperature: float = 0.1

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.student_head.d_out != self.teacher_head.d_out:
            raise ShapeMismatchError("transfer heads must share an output dim")

    @classmethod
    def build(cls, student_in_dim: int, teacher_in_dim: int, space_dim: int,
              temperature: float, rng: np.random.Generator) -> "TransferSpace":
        return cls(MLPHead(student_in_dim, space_dim, space_dim, rng),
                   MLPHead(teacher_in_dim, space_dim, space_dim, rng),
                   temperature)

    def parameters(self) -> list[Tensor]:
        return self.student_head.parameters() + self.teacher_head.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        out = self.student_head.named_parameters("student_head")
        out.update(self.teacher_head.named_parameters("teacher_head"))
        return out


def compute_anchor(external_batch: list[list[int]], teacher: TeacherHandle,
                   space: TransferSpace) -> Tensor:
    """Mean of the projected teacher representations of an external batch.

    Gradient reaches the teacher projection head only; the teacher encoder
    contributes constants.
    """
    from causerl.encoders import apply_head

    if len(external_batch) == 0:
        raise EmptyBatchError("anchor needs at least one external statement")
    projected = [
        apply_head(Tensor(teacher.encode_statement(toks)), space.teacher_head)
        for toks in external_batch
    ]
    return T.mean_rows(T.stack_rows(projected))


def project_student(statement_vectors: list[Tensor], labels,
                    space: TransferSpace) -> tuple[list[Tensor], list[Tensor]]:
    """Map statement representations into the shared space and split by label.

    Returns (positives, all); positives are the projections of statements
    whose event pair is causal.
    """
    from causerl.encoders import apply_head

    labels = list(labels)
    if len(labels) != len(statement_vectors):
        raise ShapeMismatchError("labels and statement batch sizes differ")
    projected = [apply_head(v, space.student_head) for v in statement_vectors]
    positives = [p for p, lab in zip(projected, labels) if lab == 1]
    return positives, projected


def l2_distance(a: Tensor, b: Tensor) -> Tensor:
    diff = T.sub(a, b)
    return T.sqrt(T.add_scalar(T.sum_all(T.square(diff)), _DIST_EPS))


def contrastive_loss(pos: list[Tensor], all_projected: list[Tensor],
                     anchor: Tensor, temperature: float,
                     negate_distance: bool = False) -> Tensor:
    """Mean over positives of log softmax(D/T) where D is the l2 distance to
    the anchor and the softmax runs over the whole batch.

    Minimizing this pulls the positives' distances down relative to the
    rest. ``negate_distance`` flips the sign inside the exponent (an
    ablation mode; not the default).

    The log-sum-exp is stabilized by subtracting the max scaled distance.
    """
    if len(pos) == 0:
        raise NoPositivesError("contrastive loss needs at least one causal pair")
    pos_ids = {id(p) for p in pos}
    if not pos_ids <= {id(p) for p in all_projected}:
        raise ValueError("positives must be members of the projected batch")

    sign = -1.0 if negate_distance else 1.0
    scaled = [T.mul_scalar(l2_distance(p, anchor), sign / temperature)
              for p in all_projected]
    scaled_vec = T.stack_scalars(scaled)
    shift = float(scaled_vec.data.max())  # constant; does not change gradients
    lse = T.add_scalar(
        T.log(T.sum_all(T.exp(T.add_scalar(scaled_vec, -shift)))), shift)

    loss = None
    for p, s in zip(all_projected, scaled):
        if id(p) not in pos_ids:
            continue
        term_pos = T.flip_grad(s) if MUTATE_BACKWARD_SIGN else s
        term = T.sub(term_pos, lse)
        loss = term if loss is None else T.add(loss, term)
    return T.mul_scalar(loss, 1.0 / len(pos))
