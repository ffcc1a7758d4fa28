"""Experiment harness: run configuration, cross-validation driver, the
ablation matrix and the gradient-check gateway.

Variant names:

* ``baseline``             identifier alone, no external statements
* ``full``                 stage-1 teacher + contrastive transfer
* ``no-selfrl``            untrained teacher encoder into the transfer module
* ``no-conrt-frozen``      learned teacher encoder transplanted and frozen
* ``no-conrt-finetune``    learned teacher encoder transplanted, fine-tuned
* ``statements-as-data``   external statements as pseudo-positive examples
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from causerl import conrt, kernels
from causerl.conrt import TeacherHandle, TransferSpace, contrastive_loss, \
    project_student
from causerl.corpus import (
    CausalStatement,
    EventPairExample,
    FoldPlan,
    SyntheticSpec,
    build_vocabulary,
    encode_corpus,
    generate_synthetic,
    load_examples_jsonl,
    load_statements_jsonl,
    make_folds,
    pseudo_examples_from_statements,
    tokenize,
)
from causerl.encoders import Vocabulary
from causerl.errors import MissingArtifactError, UnknownVariantError
from causerl.gradcheck import finite_difference_check
from causerl.identifier import (
    IdentifierConfig,
    IdentifierModel,
    encode_pair,
    pair_logit,
    predict,
    train_identifier,
)
from causerl.metrics import FoldResult, MetricReport, confusion
from causerl.selfrl import OnlineNetwork, SelfRLConfig, SelfRLResult, \
    selfrl_loss, train_selfrl
from causerl.tensor import Tensor
from causerl import tensor as T

VARIANTS = ("baseline", "full", "no-selfrl", "no-conrt-frozen",
            "no-conrt-finetune", "statements-as-data")
_TRANSFER_VARIANTS = ("full", "no-selfrl")
_TRANSPLANT_VARIANTS = ("no-conrt-frozen", "no-conrt-finetune")


@dataclass
class RunConfig:
    """Flat key-value run configuration; mirrors the config file schema."""

    mode: str = ""
    out_dir: str = "runs/latest"
    # corpus generation
    corpus_vocab_size: int = 200
    corpus_patterns: int = 20
    corpus_external: int = 400
    corpus_examples: int = 600
    corpus_overlap: float = 0.8
    corpus_noise: float = 0.05
    corpus_seed: int = 0
    corpus_examples_per_doc: int = 5
    corpus_topics: int = 10
    # artifact paths (read modes)
    external_path: str = ""
    eci_path: str = ""
    folds_path: str = ""
    teacher_path: str = ""
    # stage 1; learning rate is desk-scale calibrated (see README)
    selfrl_lr: float = 1e-3
    selfrl_tau: float = 0.996
    selfrl_batch_size: int = 48
    selfrl_max_steps: int = 300
    selfrl_seed: int = 0
    selfrl_d_emb: int = 32
    selfrl_hidden: int = 50
    selfrl_proj_dim: int = 50
    selfrl_weight_decay: float = 0.01
    selfrl_copy_target_at_init: bool = True
    selfrl_checkpoint_every: int = 0
    # stage 2; learning rate is desk-scale calibrated (see README)
    id_lr: float = 5e-3
    id_batch_size: int = 16
    id_negative_keep_rate: float = 0.6
    id_temperature: float = 0.1
    id_external_batch_size: int = 48
    id_patience: int = 5
    id_max_epochs: int = 12
    id_d_emb: int = 32
    id_hidden: int = 50
    id_transfer_dim: int = 50
    id_classifier_hidden: int = 50
    id_weight_decay: float = 0.01
    id_threshold: float = 0.5
    # evaluation
    eval_k: int = 5
    eval_seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    eval_variants: list[str] = field(default_factory=lambda: ["baseline", "full"])
    fold_seed: int = 13
    ablate_variants: list[str] = field(default_factory=lambda: list(VARIANTS))
    # gradcheck
    gradcheck_seeds: int = 20
    gradcheck_h: float = 1e-5

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            vocab_size=self.corpus_vocab_size, n_patterns=self.corpus_patterns,
            n_external_statements=self.corpus_external,
            n_eci_examples=self.corpus_examples,
            pattern_overlap=self.corpus_overlap, noise_rate=self.corpus_noise,
            seed=self.corpus_seed,
            examples_per_doc=self.corpus_examples_per_doc,
            n_topics=self.corpus_topics)

    def selfrl_config(self, seed_offset: int = 0) -> SelfRLConfig:
        return SelfRLConfig(
            lr=self.selfrl_lr, tau=self.selfrl_tau,
            batch_size=self.selfrl_batch_size, max_steps=self.selfrl_max_steps,
            seed=self.selfrl_seed + seed_offset, d_emb=self.selfrl_d_emb,
            hidden=self.selfrl_hidden, proj_dim=self.selfrl_proj_dim,
            weight_decay=self.selfrl_weight_decay,
            copy_target_at_init=self.selfrl_copy_target_at_init,
            checkpoint_every=self.selfrl_checkpoint_every)

    def identifier_config(self, seed: int = 0) -> IdentifierConfig:
        return IdentifierConfig(
            lr=self.id_lr, batch_size=self.id_batch_size,
            negative_keep_rate=self.id_negative_keep_rate,
            temperature=self.id_temperature,
            external_batch_size=self.id_external_batch_size,
            patience=self.id_patience, max_epochs=self.id_max_epochs,
            seed=seed, d_emb=self.id_d_emb, hidden=self.id_hidden,
            transfer_dim=self.id_transfer_dim,
            classifier_hidden=self.id_classifier_hidden,
            weight_decay=self.id_weight_decay, threshold=self.id_threshold)


@dataclass
class Materials:
    """Everything a cross-validation run consumes."""

    statements: list[CausalStatement]
    examples: list[EventPairExample]
    vocab: Vocabulary
    plan: FoldPlan


def materials_from_corpus(statements, examples, k: int, fold_seed: int
                          ) -> Materials:
    vocab = build_vocabulary(statements, examples)
    encode_corpus(statements, examples, vocab)
    plan = make_folds(examples, k, fold_seed)
    return Materials(statements, examples, vocab, plan)


def generate_materials(run: RunConfig) -> Materials:
    corpus = generate_synthetic(run.synthetic_spec())
    return materials_from_corpus(corpus.statements, corpus.examples,
                                 run.eval_k, run.fold_seed)


def load_materials(run: RunConfig) -> Materials:
    for name, path in (("external statements", run.external_path),
                       ("ECI examples", run.eci_path)):
        if not path or not Path(path).exists():
            raise MissingArtifactError(f"{name} file not found: {path!r}")
    statements = load_statements_jsonl(run.external_path)
    examples = load_examples_jsonl(run.eci_path)
    vocab = build_vocabulary(statements, examples)
    encode_corpus(statements, examples, vocab)
    if run.folds_path and Path(run.folds_path).exists():
        plan = FoldPlan.load(run.folds_path)
    else:
        plan = make_folds(examples, run.eval_k, run.fold_seed)
    return Materials(statements, examples, vocab, plan)


# ---------------------------------------------------------------------------
# cross-validation


class _TeacherCache:
    """One stage-1 training run per evaluation seed, shared across folds and
    across the ablation variants that reuse the learned encoder."""

    def __init__(self, run: RunConfig, materials: Materials):
        self.run = run
        self.materials = materials
        self._results: dict[int, SelfRLResult] = {}
        self._loaded: TeacherHandle | None = None

    def result(self, seed: int) -> SelfRLResult:
        if seed not in self._results:
            config = self.run.selfrl_config(seed_offset=seed)
            self._results[seed] = train_selfrl(
                self.materials.statements, self.materials.vocab, config)
        return self._results[seed]

    def handle(self, seed: int) -> TeacherHandle:
        if self.run.teacher_path:
            if self._loaded is None:
                if not Path(self.run.teacher_path).exists():
                    raise MissingArtifactError(
                        f"teacher checkpoint not found: {self.run.teacher_path!r}")
                self._loaded = TeacherHandle.from_checkpoint(self.run.teacher_path)
            return self._loaded
        return TeacherHandle.from_selfrl(self.result(seed))

    def untrained_handle(self, seed: int) -> TeacherHandle:
        from causerl.encoders import FrozenEmbeddingProvider

        config = self.run.selfrl_config(seed_offset=seed)
        rng = np.random.default_rng([config.seed, 9999])
        provider = FrozenEmbeddingProvider(len(self.materials.vocab),
                                           config.d_emb, rng)
        online = OnlineNetwork(config, rng)
        return TeacherHandle(online.enc, provider, self.materials.vocab)


def _split_fold(materials: Materials, fold_idx: int):
    plan = materials.plan
    test_docs = set(plan.folds[fold_idx])
    dev_docs = set(plan.dev)
    train, dev, test = [], [], []
    for ex in materials.examples:
        if ex.doc_id in test_docs:
            test.append(ex)
        elif ex.doc_id in dev_docs:
            dev.append(ex)
        else:
            train.append(ex)
    return train, dev, test


def _transplant_teacher(model: IdentifierModel, teacher: TeacherHandle,
                        freeze: bool) -> None:
    if (model.enc.d_emb, model.enc.hidden) != (teacher.enc.d_emb,
                                               teacher.enc.hidden):
        raise ValueError("identifier and teacher encoder dims must match "
                         "for encoder transplantation")
    for p_m, p_t in zip(model.enc.parameters(), teacher.enc.parameters()):
        p_m.data[...] = p_t.data
    model.emb.matrix.data[...] = teacher.provider.matrix.data
    if freeze:
        model.enc.set_trainable(False)
        model.emb.set_trainable(False)


def run_fold(variant: str, seed: int, fold_idx: int, materials: Materials,
             run: RunConfig, cache: _TeacherCache) -> FoldResult:
    if variant not in VARIANTS:
        raise UnknownVariantError(f"{variant!r}; known: {VARIANTS}")
    train_ex, dev_ex, test_ex = _split_fold(materials, fold_idx)
    config = run.identifier_config(seed)
    rng = np.random.default_rng([seed, fold_idx, VARIANTS.index(variant)])
    model = IdentifierModel(len(materials.vocab), config, rng)

    teacher = None
    space = None
    external_seqs: list[list[int]] = []
    if variant in _TRANSFER_VARIANTS:
        teacher = (cache.handle(seed) if variant == "full"
                   else cache.untrained_handle(seed))
        space = TransferSpace.build(2 * config.hidden, 2 * teacher.enc.hidden,
                                    config.transfer_dim, config.temperature,
                                    rng)
        # the anchor runs through the teacher, so encode with its vocabulary
        external_seqs = [teacher.vocab.encode(tokenize(s.converted))
                         for s in materials.statements]
    elif variant in _TRANSPLANT_VARIANTS:
        _transplant_teacher(model, cache.handle(seed),
                            freeze=(variant == "no-conrt-frozen"))
    elif variant == "statements-as-data":
        pseudo = pseudo_examples_from_statements(materials.statements)
        encode_corpus([], pseudo, materials.vocab)
        train_ex = train_ex + pseudo

    train_identifier(train_ex, dev_ex, external_seqs, model, teacher, space,
                     config, rng)
    preds = [predict(ex, model, config.threshold) for ex in test_ex]
    tp, fp, fn = confusion(preds, [ex.label for ex in test_ex])
    return FoldResult(variant, seed, fold_idx, tp, fp, fn, len(test_ex))


def run_cross_validation(run: RunConfig, materials: Materials | None = None,
                         variants: list[str] | None = None) -> MetricReport:
    """k-fold cross-validation over the configured variants and seeds."""
    if materials is None:
        materials = load_materials(run)
    variants = list(variants if variants is not None else run.eval_variants)
    for v in variants:
        if v not in VARIANTS:
            raise UnknownVariantError(f"{v!r}; known: {VARIANTS}")

    cache = _TeacherCache(run, materials)
    report = MetricReport(meta=_report_meta(run, materials, variants))
    for variant in variants:
        for seed in run.eval_seeds:
            for fold_idx in range(materials.plan.k):
                report.add(run_fold(variant, seed, fold_idx, materials, run,
                                    cache))
    return report


def run_ablation(run: RunConfig, materials: Materials | None = None
                 ) -> MetricReport:
    """Cross-validation over the ablation matrix; baseline and full rows are
    always present for comparability."""
    variants = list(run.ablate_variants)
    for required in ("baseline", "full"):
        if required not in variants:
            variants.insert(0, required)
    return run_cross_validation(run, materials, variants)


def _report_meta(run: RunConfig, materials: Materials,
                 variants: list[str]) -> dict:
    return {
        "variants": variants,
        "seeds": list(run.eval_seeds),
        "k": materials.plan.k,
        "n_examples": len(materials.examples),
        "n_statements": len(materials.statements),
        "kernel_backend": kernels.BACKEND,
    }


# ---------------------------------------------------------------------------
# gradient-check gateway


def _toy_identifier(rng, vocab_size=12):
    config = IdentifierConfig(d_emb=3, hidden=2, transfer_dim=3,
                              classifier_hidden=3, batch_size=4)
    return IdentifierModel(vocab_size, config, rng), config


def _toy_examples(rng, vocab_size=12, count=3):
    out = []
    for i in range(count):
        n = int(rng.integers(4, 7))
        tokens = [f"w{j}" for j in range(n)]
        ex = EventPairExample(f"d{i}", tokens, (0, 1), (n - 2, n - 1),
                              int(rng.integers(0, 2)))
        ex.token_ids = rng.integers(0, vocab_size, size=n).tolist()
        out.append(ex)
    if not any(ex.label == 1 for ex in out):
        out[0].label = 1
    return out


def _surface_selfrl(seed: int):
    config = SelfRLConfig(d_emb=3, hidden=2, proj_dim=3, batch_size=2)
    rng = np.random.default_rng(seed)
    from causerl.encoders import FrozenEmbeddingProvider
    from causerl.selfrl import TargetNetwork

    vocab_size = 10
    provider = FrozenEmbeddingProvider(vocab_size, config.d_emb, rng)
    online = OnlineNetwork(config, rng)
    target = TargetNetwork(config, rng)
    tokens_a = rng.integers(0, vocab_size, size=4).tolist()
    tokens_b = rng.integers(0, vocab_size, size=5).tolist()

    def f(_params):
        return selfrl_loss(tokens_a, tokens_b, online, target, provider)

    return f, online.parameters()


def _surface_classifier(seed: int):
    rng = np.random.default_rng(seed)
    model, _ = _toy_identifier(rng)
    batch = _toy_examples(rng)
    labels = np.array([ex.label for ex in batch], dtype=np.float64)

    def f(_params):
        logits = []
        for ex in batch:
            r_event, r_state = encode_pair(ex, model)
            logits.append(pair_logit(r_event, r_state, model))
        return T.binary_cross_entropy(T.stack_scalars(logits), labels)

    return f, model.parameters()


def _surface_contrastive(seed: int):
    rng = np.random.default_rng(seed)
    model, config = _toy_identifier(rng)
    space = TransferSpace.build(2 * config.hidden, 2 * config.hidden,
                                config.transfer_dim, config.temperature, rng)
    vec_data = [rng.normal(size=2 * config.hidden) for _ in range(4)]
    labels = [1, 0, 1, 0]
    anchor_data = rng.normal(size=config.transfer_dim)

    def f(_params):
        vecs = [Tensor(v) for v in vec_data]
        pos, all_projected = project_student(vecs, labels, space)
        return contrastive_loss(pos, all_projected, Tensor(anchor_data),
                                config.temperature)

    return f, space.student_head.parameters()


def _surface_joint(seed: int):
    rng = np.random.default_rng(seed)
    model, config = _toy_identifier(rng)
    batch = _toy_examples(rng, count=4)
    labels = np.array([ex.label for ex in batch], dtype=np.float64)
    teacher_cfg = SelfRLConfig(d_emb=3, hidden=2, proj_dim=3)
    from causerl.encoders import FrozenEmbeddingProvider

    provider = FrozenEmbeddingProvider(12, teacher_cfg.d_emb, rng)
    teacher = TeacherHandle(OnlineNetwork(teacher_cfg, rng).enc, provider,
                            Vocabulary())
    space = TransferSpace.build(2 * config.hidden, 2 * teacher_cfg.hidden,
                                config.transfer_dim, config.temperature, rng)
    external = [rng.integers(0, 12, size=4).tolist() for _ in range(3)]

    def f(_params):
        from causerl.conrt import compute_anchor

        logits = []
        vecs = []
        for ex in batch:
            r_event, r_state = encode_pair(ex, model)
            logits.append(pair_logit(r_event, r_state, model))
            vecs.append(r_state)
        l_stu = T.binary_cross_entropy(T.stack_scalars(logits), labels)
        pos, all_projected = project_student(vecs, labels, space)
        anchor = compute_anchor(external, teacher, space)
        l_con = contrastive_loss(pos, all_projected, anchor,
                                 config.temperature)
        return T.add(l_stu, l_con)

    return f, model.parameters() + space.parameters()


GRADCHECK_SURFACES = {
    "selfrl_symmetrized": _surface_selfrl,
    "classifier_bce": _surface_classifier,
    "contrastive_transfer": _surface_contrastive,
    "joint_objective": _surface_joint,
}

_PROBE_SCALE = 1e-3


def _with_probe(f, params, seed: int):
    """Add a fixed linear term c.p to the checked surface.

    The term's analytic gradient is the constant c, exact by construction,
    so any analytic-vs-central-difference discrepancy still comes from the
    loss's backward rules. Its purpose is conditioning: it lifts every
    parameter element's gradient magnitude to ~1e-3, far above the central
    difference noise floor at h=1e-5, where otherwise near-zero gradient
    elements (saturated LSTM gate paths reach 1e-11) would drown the check
    in roundoff. Absolute backward errors down to ~1e-7 remain detectable.
    """
    rng = np.random.default_rng([seed, 777])
    coeffs = [Tensor(_PROBE_SCALE * (0.5 + rng.random(p.data.shape))
                     * np.where(rng.random(p.data.shape) < 0.5, -1.0, 1.0))
              for p in params]

    def probed(ps):
        loss = f(ps)
        for p, c in zip(ps, coeffs):
            loss = T.add(loss, T.sum_all(T.mul(p, c)))
        return loss

    return probed


def cmd_gradcheck(seeds: int = 20, h: float = 1e-5, tolerance: float = 1e-4,
                  mutate: str | None = None) -> dict:
    """Finite-difference checks over the four loss surfaces.

    ``mutate="conrt-sign"`` injects a sign error into the contrastive
    backward rule; the check must then fail (detector sanity).
    """
    if mutate not in (None, "conrt-sign"):
        raise UnknownVariantError(f"unknown mutation {mutate!r}")
    started = time.time()
    surfaces = {}
    conrt.MUTATE_BACKWARD_SIGN = mutate == "conrt-sign"
    try:
        for name, builder in GRADCHECK_SURFACES.items():
            worst = 0.0
            for seed in range(seeds):
                f, params = builder(seed)
                worst = max(worst,
                            finite_difference_check(_with_probe(f, params, seed),
                                                    params, h))
            surfaces[name] = {"max_rel_error": worst,
                              "passed": bool(worst < tolerance)}
    finally:
        conrt.MUTATE_BACKWARD_SIGN = False
    return {
        "surfaces": surfaces,
        "tolerance": tolerance,
        "h": h,
        "seeds": seeds,
        "mutation": mutate,
        "all_passed": all(s["passed"] for s in surfaces.values()),
        "elapsed_seconds": round(time.time() - started, 3),
    }


# ---------------------------------------------------------------------------
# reproducibility manifest


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, run: RunConfig, input_paths: list[str]) -> Path:
    manifest = {
        "config": run.to_dict(),
        "kernel_backend": kernels.BACKEND,
        "corpus_checksums": {p: file_checksum(p) for p in input_paths
                             if p and Path(p).exists()},
    }
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(path) -> RunConfig:
    doc = json.loads(Path(path).read_text())
    run = RunConfig.from_dict(doc["config"])
    for p, expected in doc.get("corpus_checksums", {}).items():
        if not Path(p).exists():
            raise MissingArtifactError(f"manifest input missing: {p}")
        if file_checksum(p) != expected:
            raise MissingArtifactError(f"manifest input changed: {p}")
    return run
