"""Stage 1: self-supervised causal representation learning.

An online network (encoder + projector + predictor, weights theta) regresses
the projection produced by a target network (encoder + projector, weights
delta) on a second statement. Only theta receives gradient updates; delta
follows theta by exponential moving average. The loss is the symmetrized
normalized MSE between the online prediction and the stop-gradient target
projection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from causerl import tensor as T
from causerl.encoders import (
    BiLSTMEncoder,
    FrozenEmbeddingProvider,
    MLPHead,
    Vocabulary,
    apply_head,
    embed,
    encode_sequence,
    pool_statement,
)
from causerl.errors import (
    BatchTooSmallError,
    EmptyCorpusError,
    ShapeMismatchError,
)
from causerl.optim import AdamW
from causerl.tensor import Tape, Tensor, backward


@dataclass
class SelfRLConfig:
    lr: float = 1e-5                 # online-network learning rate
    tau: float = 0.996               # EMA decay toward the online weights
    batch_size: int = 48
    max_steps: int = 400
    seed: int = 0
    d_emb: int = 32
    hidden: int = 50
    proj_dim: int = 50
    weight_decay: float = 0.01
    copy_target_at_init: bool = True
    checkpoint_every: int = 0        # 0 = only at the end

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (loss needs pairs)")
        if self.lr <= 0 or self.max_steps <= 0:
            raise ValueError("lr and max_steps must be positive")


class OnlineNetwork:
    """Encoder + projector + predictor; jointly the trainable weight set."""

    def __init__(self, config: SelfRLConfig, rng: np.random.Generator):
        h2 = 2 * config.hidden
        self.enc = BiLSTMEncoder(config.d_emb, config.hidden, rng)
        self.proj = MLPHead(h2, config.proj_dim, config.proj_dim, rng)
        self.pred = MLPHead(config.proj_dim, config.proj_dim, config.proj_dim, rng)

    def parameters(self) -> list[Tensor]:
        return (self.enc.parameters() + self.proj.parameters()
                + self.pred.parameters())

    def named_parameters(self) -> dict[str, Tensor]:
        out = self.enc.named_parameters("enc")
        out.update(self.proj.named_parameters("proj"))
        out.update(self.pred.named_parameters("pred"))
        return out


class TargetNetwork:
    """Same architecture minus the predictor; never sees a gradient."""

    def __init__(self, config: SelfRLConfig, rng: np.random.Generator):
        h2 = 2 * config.hidden
        self.enc = BiLSTMEncoder(config.d_emb, config.hidden, rng)
        self.proj = MLPHead(h2, config.proj_dim, config.proj_dim, rng)
        for p in self.parameters():
            p.requires_grad = False
            p.grad = None

    def parameters(self) -> list[Tensor]:
        return self.enc.parameters() + self.proj.parameters()

    def copy_from(self, online: OnlineNetwork) -> None:
        for p_t, p_o in zip(self.parameters(),
                            online.enc.parameters() + online.proj.parameters()):
            p_t.data[...] = p_o.data


@dataclass
class SelfRLStats:
    """Per-step training log: loss, collapse diagnostic, EMA distance."""

    records: list[dict] = field(default_factory=list)

    def log(self, step: int, loss: float, proj_std: float,
            theta_delta_dist: float) -> None:
        self.records.append({
            "step": step,
            "loss": loss,
            "proj_std": proj_std,
            "theta_delta_dist": theta_delta_dist,
        })

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class SelfRLResult:
    online: OnlineNetwork
    target: TargetNetwork
    provider: FrozenEmbeddingProvider
    vocab: Vocabulary
    config: SelfRLConfig
    stats: SelfRLStats


def pair_statements(batch: list, rng: np.random.Generator) -> list[tuple]:
    """Randomly pair up a batch of statements; any odd leftover is dropped."""
    if len(batch) < 2:
        raise BatchTooSmallError(f"need >= 2 statements, got {len(batch)}")
    order = rng.permutation(len(batch))
    return [(batch[order[i]], batch[order[i + 1]])
            for i in range(0, len(batch) - 1, 2)]


def statement_vector(token_ids: list[int], provider: FrozenEmbeddingProvider,
                     enc: BiLSTMEncoder) -> Tensor:
    return pool_statement(encode_sequence(embed(token_ids, provider), enc))


def _one_side(token_ids_online, token_ids_target, online: OnlineNetwork,
              target: TargetNetwork, provider) -> tuple[Tensor, Tensor]:
    """Online prediction for one statement vs. the stop-gradient target
    projection of the other. Returns (loss_term, online_projection)."""
    z = apply_head(statement_vector(token_ids_online, provider, online.enc),
                   online.proj)
    y = apply_head(z, online.pred)
    z_prime = apply_head(
        statement_vector(token_ids_target, provider, target.enc), target.proj)
    return T.normalized_mse(y, z_prime.detach()), z


def selfrl_loss(tokens_a: list[int], tokens_b: list[int],
                online: OnlineNetwork, target: TargetNetwork,
                provider: FrozenEmbeddingProvider) -> Tensor:
    """Symmetrized loss for one statement pair; in [0, 8]."""
    term_ab, _ = _one_side(tokens_a, tokens_b, online, target, provider)
    term_ba, _ = _one_side(tokens_b, tokens_a, online, target, provider)
    return T.add(term_ab, term_ba)


def ema_update(target: TargetNetwork, online: OnlineNetwork, tau: float) -> None:
    """delta <- tau * delta + (1 - tau) * theta, elementwise."""
    online_params = online.enc.parameters() + online.proj.parameters()
    for p_t, p_o in zip(target.parameters(), online_params):
        if p_t.data.shape != p_o.data.shape:
            raise ShapeMismatchError(
                f"EMA shapes differ: {p_t.data.shape} vs {p_o.data.shape}")
        p_t.data[...] = tau * p_t.data + (1.0 - tau) * p_o.data


def theta_delta_distance(online: OnlineNetwork, target: TargetNetwork) -> float:
    """Global l2 distance between theta and delta over the shared submodules."""
    online_params = online.enc.parameters() + online.proj.parameters()
    total = 0.0
    for p_t, p_o in zip(target.parameters(), online_params):
        diff = p_o.data - p_t.data
        total += float(np.dot(diff.reshape(-1), diff.reshape(-1)))
    return float(np.sqrt(total))


def collapse_diagnostic(projections: list[np.ndarray]) -> float:
    """Mean per-dimension standard deviation of l2-normalized projections.

    Zero means every statement mapped to the same representation, the
    degenerate solution the predictor and slow-moving target are meant to
    prevent.
    """
    if len(projections) < 2:
        raise BatchTooSmallError("collapse diagnostic needs >= 2 projections")
    mat = np.stack([np.asarray(p, dtype=np.float64) for p in projections])
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    mat = mat / norms
    return float(mat.std(axis=0).mean())


def train_selfrl(statements, vocab: Vocabulary,
                 config: SelfRLConfig,
                 checkpoint_dir: Path | None = None) -> SelfRLResult:
    """Run the stage-1 training loop over external causal statements.

    ``statements`` is a list of token-id sequences (or objects with a
    ``token_ids`` attribute). Per batch: symmetrized loss over random
    disjoint pairs, AdamW update of theta, then EMA update of delta.
    """
    token_seqs = [s if isinstance(s, list) else s.token_ids for s in statements]
    if not token_seqs:
        raise EmptyCorpusError("no statements to train on")

    rng = np.random.default_rng(config.seed)
    provider = FrozenEmbeddingProvider(len(vocab), config.d_emb, rng)
    online = OnlineNetwork(config, rng)
    target = TargetNetwork(config, rng)
    if config.copy_target_at_init:
        target.copy_from(online)

    opt = AdamW(online.parameters(), lr=config.lr,
                weight_decay=config.weight_decay)
    target_ids = {id(p) for p in target.parameters()}
    stats = SelfRLStats()

    step = 0
    while step < config.max_steps:
        epoch_order = rng.permutation(len(token_seqs))
        for lo in range(0, len(token_seqs), config.batch_size):
            if step >= config.max_steps:
                break
            batch = [token_seqs[i] for i in epoch_order[lo:lo + config.batch_size]]
            if len(batch) < 2:
                continue
            pairs = pair_statements(batch, rng)

            with Tape():
                z_values = []
                loss = None
                for a, b in pairs:
                    term_ab, z_a = _one_side(a, b, online, target, provider)
                    term_ba, z_b = _one_side(b, a, online, target, provider)
                    pair_loss = T.add(term_ab, term_ba)
                    loss = pair_loss if loss is None else T.add(loss, pair_loss)
                    z_values.extend([z_a.data, z_b.data])
                loss = T.mul_scalar(loss, 1.0 / len(pairs))
                backward(loss)

            assert not any(id(p) in target_ids for p in opt.params), \
                "target parameters leaked into the optimizer"
            opt.step()
            opt.zero_grad()
            ema_update(target, online, config.tau)

            step += 1
            stats.log(step, float(loss.data), collapse_diagnostic(z_values),
                      theta_delta_distance(online, target))
            if (checkpoint_dir is not None and config.checkpoint_every
                    and step % config.checkpoint_every == 0):
                save_teacher_checkpoint(
                    Path(checkpoint_dir) / f"teacher_step{step}.json",
                    online, provider, vocab, config)

    result = SelfRLResult(online, target, provider, vocab, config, stats)
    if checkpoint_dir is not None:
        save_teacher_checkpoint(Path(checkpoint_dir) / "teacher.json",
                                online, provider, vocab, config)
    return result


def save_teacher_checkpoint(path, online: OnlineNetwork,
                            provider: FrozenEmbeddingProvider,
                            vocab: Vocabulary, config: SelfRLConfig) -> None:
    from causerl.checkpoint import save_params

    named = online.named_parameters()
    named.update(provider.named_parameters("provider"))
    save_params(path, named, extra={
        "d_emb": config.d_emb,
        "hidden": config.hidden,
        "proj_dim": config.proj_dim,
        "vocab": vocab.to_list(),
    })
