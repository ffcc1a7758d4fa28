"""The event causality identifier (student model).

A trainable embedding table plus its own BiLSTM encode the statement; the
event representation is the concatenation of the two pooled event spans
(4h) and the statement representation is the mean over all tokens (2h).
A two-layer MLP over their concatenation yields one logit. Training adds
the contrastive transfer loss; evaluation never touches the teacher.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from causerl import tensor as T
from causerl.conrt import TeacherHandle, TransferSpace, compute_anchor, \
    contrastive_loss, project_student
from causerl.corpus import EventPairExample
from causerl.encoders import (
    BiLSTMEncoder,
    EmbeddingTable,
    MLPHead,
    apply_head,
    embed,
    encode_sequence,
    pool_event_span,
    pool_statement,
)
from causerl.errors import EmptyBatchError
from causerl.optim import AdamW
from causerl.tensor import Tape, Tensor, backward


@dataclass
class IdentifierConfig:
    lr: float = 2e-5                  # student learning rate
    batch_size: int = 16
    negative_keep_rate: float = 0.6
    temperature: float = 0.1
    external_batch_size: int = 48
    patience: int = 5                 # early-stop patience, in evaluations
    max_epochs: int = 20
    seed: int = 0
    d_emb: int = 32
    hidden: int = 50
    transfer_dim: int = 50
    classifier_hidden: int = 50
    weight_decay: float = 0.01
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.negative_keep_rate <= 1.0:
            raise ValueError(
                f"negative_keep_rate {self.negative_keep_rate} not in (0, 1]")
        for name in ("lr", "batch_size", "temperature", "external_batch_size",
                     "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class IdentifierModel:
    """Trainable featurizer + BiLSTM + classifier; jointly the student
    weights. Classifier input is [r_event (4h); r_event_state (2h)]."""

    def __init__(self, vocab_size: int, config: IdentifierConfig,
                 rng: np.random.Generator):
        self.config = config
        self.emb = EmbeddingTable(vocab_size, config.d_emb, rng)
        self.enc = BiLSTMEncoder(config.d_emb, config.hidden, rng)
        self.classifier = MLPHead(6 * config.hidden, config.classifier_hidden,
                                  1, rng)

    def parameters(self) -> list[Tensor]:
        return (self.emb.parameters() + self.enc.parameters()
                + self.classifier.parameters())

    def named_parameters(self) -> dict[str, Tensor]:
        out = self.emb.named_parameters("emb")
        out.update(self.enc.named_parameters("enc"))
        out.update(self.classifier.named_parameters("classifier"))
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, p in self.named_parameters().items():
            p.data[...] = snap[k]


def encode_pair(ex: EventPairExample, model: IdentifierModel
                ) -> tuple[Tensor, Tensor]:
    """Return (r_event, r_event_state) for one example."""
    per_token = encode_sequence(embed(ex.token_ids, model.emb), model.enc)
    r_event = T.concat_vec([pool_event_span(per_token, ex.span_e1),
                            pool_event_span(per_token, ex.span_e2)])
    r_event_state = pool_statement(per_token)
    return r_event, r_event_state


def pair_logit(r_event: Tensor, r_event_state: Tensor,
               model: IdentifierModel) -> Tensor:
    out = apply_head(T.concat_vec([r_event, r_event_state]), model.classifier)
    return T.sum_all(out)  # (1,) -> scalar


def classify_pair(r_event: Tensor, r_event_state: Tensor,
                  model: IdentifierModel) -> float:
    """Causal probability for an encoded pair, in the open interval (0, 1)."""
    logit = float(pair_logit(r_event, r_event_state, model).data)
    if logit >= 0:
        return 1.0 / (1.0 + np.exp(-logit))
    e = np.exp(logit)
    return float(e / (1.0 + e))


def predict(ex: EventPairExample, model: IdentifierModel,
            threshold: float = 0.5) -> int:
    """Label an event pair: 1 iff probability >= threshold. Uses nothing but
    the identifier; the transfer module plays no part in evaluation."""
    r_event, r_event_state = encode_pair(ex, model)
    return int(classify_pair(r_event, r_event_state, model) >= threshold)


def predict_proba(ex: EventPairExample, model: IdentifierModel) -> float:
    r_event, r_event_state = encode_pair(ex, model)
    return classify_pair(r_event, r_event_state, model)


def negative_sampling(examples: list[EventPairExample], keep_rate: float,
                      rng: np.random.Generator) -> list[EventPairExample]:
    """Keep every positive; keep each negative independently with
    probability ``keep_rate``. Training-time only."""
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError(f"keep_rate {keep_rate} not in (0, 1]")
    return [ex for ex in examples
            if ex.label == 1 or rng.random() < keep_rate]


@dataclass
class JointLosses:
    total: float
    classification: float
    contrastive: float | None


def joint_step(batch: list[EventPairExample],
               external_batch: list[list[int]],
               model: IdentifierModel,
               teacher: TeacherHandle | None,
               space: TransferSpace | None,
               opt: AdamW,
               config: IdentifierConfig) -> JointLosses:
    """One training step: classification loss plus, when a causal pair is
    present and a teacher is attached, the contrastive transfer loss."""
    if not batch:
        raise EmptyBatchError("joint step needs a nonempty batch")
    labels = np.array([ex.label for ex in batch], dtype=np.float64)
    use_transfer = teacher is not None and space is not None

    with Tape():
        logits = []
        statement_vecs = []
        for ex in batch:
            r_event, r_event_state = encode_pair(ex, model)
            logits.append(pair_logit(r_event, r_event_state, model))
            statement_vecs.append(r_event_state)
        l_stu = T.binary_cross_entropy(T.stack_scalars(logits), labels)

        l_con = None
        if use_transfer:
            pos, all_projected = project_student(statement_vecs, labels, space)
            if pos:
                anchor = compute_anchor(external_batch, teacher, space)
                l_con = contrastive_loss(pos, all_projected, anchor,
                                         config.temperature)
        total = l_stu if l_con is None else T.add(l_stu, l_con)
        backward(total)

    opt.step()
    opt.zero_grad()
    return JointLosses(float(total.data), float(l_stu.data),
                       None if l_con is None else float(l_con.data))


def evaluate_f1(examples: list[EventPairExample], model: IdentifierModel,
                threshold: float = 0.5) -> float:
    from causerl.metrics import prf1

    tp = fp = fn = 0
    for ex in examples:
        pred = predict(ex, model, threshold)
        tp += pred == 1 and ex.label == 1
        fp += pred == 1 and ex.label == 0
        fn += pred == 0 and ex.label == 1
    return prf1(tp, fp, fn)[2]


def train_identifier(train_examples: list[EventPairExample],
                     dev_examples: list[EventPairExample],
                     external_token_seqs: list[list[int]],
                     model: IdentifierModel,
                     teacher: TeacherHandle | None,
                     space: TransferSpace | None,
                     config: IdentifierConfig,
                     rng: np.random.Generator) -> dict:
    """Train the identifier with early stopping on dev F1.

    The external batch is resampled fresh at every step. Negative sampling
    reruns per epoch. When a dev set is present, the best-scoring snapshot
    is restored at the end.
    """
    params = [p for p in model.parameters() if p.requires_grad]
    if space is not None:
        params += space.parameters()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)

    best_f1 = -1.0
    best_snap = None
    best_space = None
    stale = 0
    history = []
    for epoch in range(config.max_epochs):
        kept = negative_sampling(train_examples, config.negative_keep_rate, rng)
        order = rng.permutation(len(kept))
        for lo in range(0, len(kept), config.batch_size):
            batch = [kept[i] for i in order[lo:lo + config.batch_size]]
            if not batch:
                continue
            external = []
            if teacher is not None and external_token_seqs:
                n = min(config.external_batch_size, len(external_token_seqs))
                pick = rng.choice(len(external_token_seqs), size=n, replace=False)
                external = [external_token_seqs[i] for i in pick]
            joint_step(batch, external, model, teacher, space, opt, config)

        record = {"epoch": epoch}
        if dev_examples:
            f1 = evaluate_f1(dev_examples, model, config.threshold)
            record["dev_f1"] = f1
            if f1 > best_f1:
                best_f1 = f1
                best_snap = model.snapshot()
                if space is not None:
                    best_space = {k: p.data.copy() for k, p in
                                  space.named_parameters().items()}
                stale = 0
            else:
                stale += 1
            history.append(record)
            if stale >= config.patience:
                break
        else:
            history.append(record)

    if best_snap is not None:
        model.restore(best_snap)
        if space is not None and best_space is not None:
            for k, p in space.named_parameters().items():
                p.data[...] = best_space[k]
    return {"history": history, "best_dev_f1": best_f1}
