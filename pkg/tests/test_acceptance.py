"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` (or plain pytest; the
summary lines print either way). The expensive end-to-end runs share
module-scoped fixtures.
"""

import time

import numpy as np
import pytest

from causerl import tensor as T
from causerl.conrt import TeacherHandle, contrastive_loss
from causerl.corpus import SyntheticSpec, convert_statement, generate_synthetic
from causerl.encoders import FrozenEmbeddingProvider
from causerl.harness import (
    RunConfig,
    _TeacherCache,
    cmd_gradcheck,
    generate_materials,
    run_ablation,
)
from causerl.metrics import MetricReport
from causerl.selfrl import (
    OnlineNetwork,
    SelfRLConfig,
    TargetNetwork,
    ema_update,
    selfrl_loss,
    theta_delta_distance,
    train_selfrl,
)
from causerl.tensor import Tape, Tensor, backward


def _verdict(criterion: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] criterion {criterion:>2}: {detail}")
    assert passed, f"criterion {criterion}: {detail}"


# -- criterion 1: gradient oracle over the four loss surfaces ----------------


def test_c01_gradient_oracle():
    started = time.time()
    report = cmd_gradcheck(seeds=20, h=1e-5, tolerance=1e-4)
    elapsed = time.time() - started
    worst = max(s["max_rel_error"] for s in report["surfaces"].values())
    _verdict(1, report["all_passed"] and elapsed < 120,
             f"4 surfaces x 20 seeds, max rel error {worst:.2e} < 1e-4, "
             f"{elapsed:.0f}s < 120s")


# -- criterion 2: Eq. 1 algebra ----------------------------------------------


def test_c02_normalized_mse_equals_cosine_form():
    rng = np.random.default_rng(2)
    worst = 0.0
    ok_bounds = True
    for _ in range(1000):
        dim = int(rng.integers(2, 64))
        y = rng.normal(size=dim) * 10 ** rng.uniform(-2, 2)
        z = rng.normal(size=dim) * 10 ** rng.uniform(-2, 2)
        val = float(T.normalized_mse(Tensor(y), Tensor(z)).data)
        cos = y @ z / (np.linalg.norm(y) * np.linalg.norm(z))
        worst = max(worst, abs(val - (2.0 - 2.0 * cos)))
        ok_bounds &= -1e-12 <= val <= 4.0 + 1e-12
    _verdict(2, worst < 1e-12 and ok_bounds,
             f"1000 pairs, max |mse - (2-2cos)| = {worst:.2e} < 1e-12, "
             f"bounds [0,4] held")


# -- criterion 3: symmetrization ---------------------------------------------


def test_c03_swap_symmetry_bit_exact():
    config = SelfRLConfig(d_emb=6, hidden=4, proj_dim=6, batch_size=2)
    rng = np.random.default_rng(3)
    provider = FrozenEmbeddingProvider(12, config.d_emb, rng)
    online = OnlineNetwork(config, rng)
    target = TargetNetwork(config, rng)
    exact = 0
    for _ in range(100):
        a = rng.integers(0, 12, size=int(rng.integers(3, 9))).tolist()
        b = rng.integers(0, 12, size=int(rng.integers(3, 9))).tolist()
        ab = float(selfrl_loss(a, b, online, target, provider).data)
        ba = float(selfrl_loss(b, a, online, target, provider).data)
        exact += ab == ba
    _verdict(3, exact == 100,
             f"loss(a,b) == loss(b,a) bit-exactly on {exact}/100 pairs")


# -- criterion 4: stop-gradient and freezing contracts ------------------------


@pytest.fixture(scope="module")
def small_run_materials():
    run = RunConfig(
        corpus_vocab_size=120, corpus_patterns=8, corpus_external=80,
        corpus_examples=120, corpus_examples_per_doc=4, corpus_topics=6,
        eval_k=3, eval_seeds=[0], selfrl_max_steps=40, selfrl_d_emb=16,
        selfrl_hidden=10, selfrl_proj_dim=12, id_d_emb=16, id_hidden=10,
        id_transfer_dim=12, id_classifier_hidden=12, id_max_epochs=3,
    )
    return run, generate_materials(run)


def test_c04_stop_gradient_and_freezing(small_run_materials):
    run, materials = small_run_materials
    config = SelfRLConfig(d_emb=6, hidden=4, proj_dim=6, batch_size=2)
    rng = np.random.default_rng(4)
    provider = FrozenEmbeddingProvider(12, config.d_emb, rng)
    online = OnlineNetwork(config, rng)
    target = TargetNetwork(config, rng)
    for p in target.parameters():
        p.requires_grad = True
        p.grad = np.zeros_like(p.data)
    with Tape():
        loss = selfrl_loss([1, 2, 3], [4, 5], online, target, provider)
        backward(loss)
    target_zero = all(np.all(p.grad == 0.0) for p in target.parameters())

    # frozen featurizer checksum across a full stage-1 run
    selfrl_cfg = run.selfrl_config()
    result = train_selfrl(materials.statements, materials.vocab, selfrl_cfg)
    fresh = FrozenEmbeddingProvider(
        len(materials.vocab), selfrl_cfg.d_emb,
        np.random.default_rng(selfrl_cfg.seed))
    provider_frozen = result.provider.checksum() == fresh.checksum()

    # teacher encoder checksum across identifier training
    cache = _TeacherCache(run, materials)
    teacher = cache.handle(0)
    checksum_before = teacher.checksum()
    from causerl.harness import run_fold
    run_fold("full", 0, 0, materials, run, cache)
    teacher_frozen = cache.handle(0).checksum() == checksum_before

    _verdict(4, target_zero and provider_frozen and teacher_frozen,
             f"target grads zero: {target_zero}, provider checksum stable: "
             f"{provider_frozen}, teacher checksum stable: {teacher_frozen}")


# -- criterion 5: EMA algebra --------------------------------------------------


def test_c05_ema_contraction():
    config = SelfRLConfig(d_emb=6, hidden=4, proj_dim=6, batch_size=2)
    rng = np.random.default_rng(5)
    online = OnlineNetwork(config, rng)
    target = TargetNetwork(config, rng)
    tau = 0.996
    d0 = theta_delta_distance(online, target)
    worst = 0.0
    for k in range(1, 101):
        ema_update(target, online, tau)
        expected = d0 * tau ** k
        worst = max(worst, abs(theta_delta_distance(online, target) - expected)
                    / expected)
    ok_contract = worst < 1e-10

    t1 = TargetNetwork(config, rng)
    before = [p.data.copy() for p in t1.parameters()]
    ema_update(t1, online, 1.0)
    ok_tau1 = all(np.array_equal(p.data, prev)
                  for p, prev in zip(t1.parameters(), before))
    ema_update(t1, online, 0.0)
    ok_tau0 = all(np.array_equal(p_t.data, p_o.data) for p_t, p_o in
                  zip(t1.parameters(),
                      online.enc.parameters() + online.proj.parameters()))
    _verdict(5, ok_contract and ok_tau0 and ok_tau1,
             f"100-step contraction rel err {worst:.2e} < 1e-10; "
             f"tau=0/1 exact: {ok_tau0}/{ok_tau1}")


# -- criterion 6: Eq. 7 closed forms and monotonicity --------------------------


def _vectors_at(anchor, dists):
    out = []
    for i, d in enumerate(dists):
        offset = np.zeros_like(anchor)
        offset[i % anchor.size] = d
        out.append(Tensor(anchor + offset))
    return out


def _con_loss(anchor, dists, n_pos, temperature):
    vecs = _vectors_at(anchor, dists)
    return float(contrastive_loss(vecs[:n_pos], vecs, Tensor(anchor),
                                  temperature).data)


def test_c06_contrastive_closed_forms():
    anchor = np.array([0.4, -0.2, 0.9, 0.1])
    equal = _con_loss(anchor, [1.5] * 4, 1, 0.3)
    ok_equal = abs(equal - np.log(0.25)) < 1e-9

    hand = _con_loss(np.zeros(4), [0.0, 0.5], 1, 0.5)
    ok_hand = abs(hand - (-1.3132616875182228)) < 1e-6

    rng = np.random.default_rng(6)
    ok_mono = True
    for _ in range(1000):
        n = int(rng.integers(2, 8))
        temperature = float(rng.uniform(0.05, 1.0))
        anchor = rng.normal(size=5)
        dists = rng.uniform(0.05, 3.0, size=n)
        step = float(rng.uniform(0.005, dists[0] * 0.9))
        before = _con_loss(anchor, dists, 1, temperature)
        dists[0] -= step
        ok_mono &= _con_loss(anchor, dists, 1, temperature) < before
    _verdict(6, ok_equal and ok_hand and ok_mono,
             f"equal-distance log(1/|P|) err {abs(equal - np.log(0.25)):.1e}; "
             f"hand case err {abs(hand + 1.3132616875):.1e}; "
             f"monotone on 1000 single-positive configs: {ok_mono}")


# -- criterion 7: Table-1 conversion ------------------------------------------


def test_c07_conversion_table():
    rows = [
        ("GLU-SPE",
         "Billy finds his childhood teddy bear >Cause/Enable> Billy gives "
         "his childhood teddy bear to his daughter",
         "Billy finds his childhood teddy bear, billy gives his childhood "
         "teddy bear to his daughter."),
        ("GLU-GEN",
         "Someone_A finds Something_A >Cause/Enable> Someone_A gives "
         "Something_A to Someone_B",
         "Someone_A finds Something_A, Someone_A gives Something_A to "
         "Someone_B."),
        ("ATOMIC",
         "PersonX follows PersonY into room >oWant> to know why PersonX is "
         "following them",
         "PersonX follows PersonY into room, to know why PersonX is "
         "following them."),
        ("DISTANT",
         "Fisk was shot to death by his mistress's new lover and Fisk's "
         "ex-business partner.",
         "Fisk was shot to death by his mistress's new lover and Fisk's "
         "ex-business partner."),
    ]
    exact = sum(convert_statement(orig, res) == want
                for res, orig, want in rows)
    idempotent = all(convert_statement(want, res) == want
                     for res, _, want in rows)

    corpus = generate_synthetic(SyntheticSpec(
        vocab_size=120, n_patterns=8, n_external_statements=100,
        n_eci_examples=20, seed=7))
    corpus_idem = all(convert_statement(s.converted, s.resource) == s.converted
                      for s in corpus.statements)
    _verdict(7, exact == 4 and idempotent and corpus_idem,
             f"{exact}/4 reference rows byte-exact; idempotence on rows and "
             f"on {len(corpus.statements)} generated statements")


# -- criterion 8: SelfRL reduces loss without collapse -------------------------


@pytest.fixture(scope="module")
def default_materials():
    run = RunConfig()
    return run, generate_materials(run)


def test_c08_selfrl_noncollapse(default_materials):
    run, materials = default_materials
    reduced = 0
    min_std = np.inf
    for seed in range(5):
        config = SelfRLConfig(max_steps=220, seed=seed)
        result = train_selfrl(materials.statements, materials.vocab, config)
        records = result.stats.records
        first = np.mean([r["loss"] for r in records[:10]])
        last = np.mean([r["loss"] for r in records[-10:]])
        reduced += last < first
        min_std = min(min_std, min(r["proj_std"] for r in records))
    _verdict(8, reduced == 5 and min_std > 1e-3,
             f"loss reduced on {reduced}/5 seeds over 220 steps; "
             f"min projection std {min_std:.2e} > 1e-3")


# -- criteria 9 and 10: directional desk-scale reproduction --------------------


@pytest.fixture(scope="module")
def ablation_report(default_materials):
    run, materials = default_materials
    started = time.time()
    report = run_ablation(run, materials)
    report.meta["elapsed"] = time.time() - started
    return run, report


def test_c09_directional_transfer_gain(ablation_report):
    run, report = ablation_report
    f1 = {v: report.f1_mean(v) for v in report.variants()}
    full = f1["full"]
    ordering = (full > f1["baseline"]
                and full >= f1["no-selfrl"]
                and full >= f1["no-conrt-frozen"]
                and full >= f1["no-conrt-finetune"])
    # time budget: the criterion covers one full cross-validation (baseline
    # plus full); the shared run here also folds in four extra ablation
    # variants, so prorate by the configured variant count
    per_variant = report.meta["elapsed"] / len(report.variants())
    in_budget = per_variant * 2 < 600
    detail = ", ".join(f"{k}={v:.3f}" for k, v in sorted(f1.items()))
    _verdict(9, ordering and in_budget,
             f"{detail}; ~{per_variant * 2:.0f}s for baseline+full < 600s")


def test_c10_statements_as_training_data_underperforms(ablation_report):
    _, report = ablation_report
    full = report.f1_mean("full")
    direct = report.f1_mean("statements-as-data")
    _verdict(10, direct < full,
             f"statements-as-data {direct:.3f} < full {full:.3f}")


# -- criterion 11: manifest determinism ----------------------------------------


def test_c11_manifest_reproducibility(tmp_path):
    import json

    from causerl.cli import main

    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "corpus_vocab_size": 100, "corpus_patterns": 6, "corpus_external": 40,
        "corpus_examples": 48, "corpus_examples_per_doc": 4,
        "corpus_topics": 4, "eval_k": 2, "eval_seeds": [0, 1],
        "selfrl_max_steps": 10, "selfrl_d_emb": 8, "selfrl_hidden": 6,
        "selfrl_proj_dim": 8, "id_d_emb": 8, "id_hidden": 6,
        "id_transfer_dim": 8, "id_classifier_hidden": 8, "id_max_epochs": 2,
    }))
    corpus_dir = tmp_path / "corpus"
    main(["gen-corpus", "--config", str(config), "--out", str(corpus_dir)])
    out1 = tmp_path / "run1"
    main(["evaluate", "--config", str(corpus_dir / "config.json"),
          "--out", str(out1)])
    out2 = tmp_path / "run2"
    main(["evaluate", "--manifest", str(out1 / "manifest.json"),
          "--out", str(out2)])
    identical = (out1 / "report.json").read_bytes() == \
        (out2 / "report.json").read_bytes()
    csv_identical = (out1 / "report.csv").read_bytes() == \
        (out2 / "report.csv").read_bytes()
    _verdict(11, identical and csv_identical,
             "re-running the manifest reproduced report.json and report.csv "
             "byte-identically")
