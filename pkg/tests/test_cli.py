import json
import subprocess
import sys
from pathlib import Path

import pytest

from causerl.cli import main

SMALL_CONFIG = {
    "corpus_vocab_size": 80, "corpus_patterns": 6, "corpus_external": 30,
    "corpus_examples": 40, "corpus_noise": 0.0, "corpus_examples_per_doc": 4,
    "corpus_topics": 5, "eval_k": 2, "eval_seeds": [0],
    "selfrl_max_steps": 8, "selfrl_d_emb": 8, "selfrl_hidden": 5,
    "selfrl_proj_dim": 6, "id_d_emb": 8, "id_hidden": 5, "id_transfer_dim": 6,
    "id_classifier_hidden": 6, "id_max_epochs": 2,
}


@pytest.fixture()
def corpus_dir(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps(SMALL_CONFIG))
    out = tmp_path / "corpus"
    assert main(["gen-corpus", "--config", str(config), "--out", str(out)]) == 0
    return out


def test_gen_corpus_outputs(corpus_dir):
    assert (corpus_dir / "external.jsonl").exists()
    assert (corpus_dir / "eci.jsonl").exists()
    assert (corpus_dir / "folds.json").exists()
    assert (corpus_dir / "manifest.json").exists()
    generated = json.loads((corpus_dir / "config.json").read_text())
    assert generated["external_path"].endswith("external.jsonl")


def test_train_selfrl_writes_teacher_and_stats(corpus_dir, tmp_path):
    out = tmp_path / "teacher"
    rc = main(["train-selfrl", "--config", str(corpus_dir / "config.json"),
               "--out", str(out)])
    assert rc == 0
    assert (out / "teacher.json").exists()
    lines = (out / "selfrl_stats.jsonl").read_text().splitlines()
    assert len(lines) == SMALL_CONFIG["selfrl_max_steps"]
    record = json.loads(lines[0])
    assert set(record) == {"step", "loss", "proj_std", "theta_delta_dist"}


def test_evaluate_writes_report_and_reruns_identically(corpus_dir, tmp_path):
    out1 = tmp_path / "eval1"
    rc = main(["evaluate", "--config", str(corpus_dir / "config.json"),
               "--out", str(out1)])
    assert rc == 0
    report1 = (out1 / "report.json").read_bytes()
    assert (out1 / "report.csv").exists()

    out2 = tmp_path / "eval2"
    rc = main(["evaluate", "--manifest", str(out1 / "manifest.json"),
               "--out", str(out2)])
    assert rc == 0
    assert (out2 / "report.json").read_bytes() == report1


def test_train_eci_writes_checkpoint_and_predictions(corpus_dir, tmp_path):
    out = tmp_path / "eci"
    rc = main(["train-eci", "--config", str(corpus_dir / "config.json"),
               "--out", str(out)])
    assert rc == 0
    assert (out / "identifier.json").exists()
    preds = [json.loads(line) for line in
             (out / "dev_predictions.jsonl").read_text().splitlines()]
    assert preds
    assert set(preds[0]) == {"doc_id", "e1", "e2", "prob", "label", "pred"}
    assert all(0.0 < p["prob"] < 1.0 for p in preds)


def test_ablate_cli_writes_comparative_report(corpus_dir, tmp_path):
    config = json.loads((corpus_dir / "config.json").read_text())
    config["ablate_variants"] = ["statements-as-data"]
    cfg_path = tmp_path / "ablate_config.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "ablate"
    assert main(["ablate", "--config", str(cfg_path), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    variants = {agg["variant"] for agg in report["aggregates"]}
    assert variants == {"baseline", "full", "statements-as-data"}


def test_gradcheck_cli(tmp_path):
    out = tmp_path / "grad"
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"gradcheck_seeds": 1}))
    assert main(["gradcheck", "--config", str(config), "--out", str(out)]) == 0
    report = json.loads((out / "gradcheck.json").read_text())
    assert report["all_passed"]
    assert main(["gradcheck", "--config", str(config), "--out", str(out),
                 "--mutate", "conrt-sign"]) == 1


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "causerl.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("gen-corpus", "train-selfrl", "train-eci", "evaluate",
                "gradcheck", "ablate"):
        assert sub in proc.stdout
