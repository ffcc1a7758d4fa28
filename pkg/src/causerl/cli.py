"""Command line interface.

    causerl gen-corpus   --config cfg.json --out runs/corpus
    causerl train-selfrl --config cfg.json --out runs/teacher
    causerl train-eci    --config cfg.json --out runs/eci
    causerl evaluate     --config cfg.json --out runs/eval
    causerl gradcheck    [--mutate conrt-sign] --out runs/gradcheck
    causerl ablate       --config cfg.json --out runs/ablate

Every run writes a reproducibility manifest; ``evaluate``/``ablate`` accept
``--manifest`` to re-run an earlier configuration (input checksums are
verified first).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from causerl import harness
from causerl.corpus import (
    generate_synthetic,
    save_examples_jsonl,
    save_statements_jsonl,
)
from causerl.harness import RunConfig, load_manifest, write_manifest
from causerl.identifier import IdentifierModel, predict_proba, train_identifier
from causerl.selfrl import train_selfrl


def _load_config(args) -> RunConfig:
    if getattr(args, "manifest", None):
        run = load_manifest(args.manifest)
    elif args.config:
        run = RunConfig.from_file(args.config)
    else:
        run = RunConfig()
    if args.out:
        run.out_dir = args.out
    return run


def _out_dir(run: RunConfig) -> Path:
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_corpus(args) -> int:
    run = _load_config(args)
    if args.seed is not None:
        run.corpus_seed = args.seed
    out = _out_dir(run)
    corpus = generate_synthetic(run.synthetic_spec())
    save_statements_jsonl(out / "external.jsonl", corpus.statements)
    save_examples_jsonl(out / "eci.jsonl", corpus.examples)
    materials = harness.materials_from_corpus(
        corpus.statements, corpus.examples, run.eval_k, run.fold_seed)
    materials.plan.save(out / "folds.json")

    run.external_path = str(out / "external.jsonl")
    run.eci_path = str(out / "eci.jsonl")
    run.folds_path = str(out / "folds.json")
    (out / "config.json").write_text(
        json.dumps(run.to_dict(), indent=2, sort_keys=True))
    write_manifest(out, run, [run.external_path, run.eci_path, run.folds_path])
    print(f"wrote {len(corpus.statements)} statements and "
          f"{len(corpus.examples)} examples to {out}")
    return 0


def cmd_train_selfrl(args) -> int:
    run = _load_config(args)
    if args.seed is not None:
        run.selfrl_seed = args.seed
    out = _out_dir(run)
    materials = harness.load_materials(run)
    result = train_selfrl(materials.statements, materials.vocab,
                          run.selfrl_config(), checkpoint_dir=out)
    result.stats.write_jsonl(out / "selfrl_stats.jsonl")
    write_manifest(out, run, [run.external_path, run.eci_path])
    last = result.stats.records[-1]
    print(f"teacher checkpoint: {out / 'teacher.json'}")
    print(f"final loss {last['loss']:.4f}, proj_std {last['proj_std']:.4f} "
          f"after {last['step']} steps")
    return 0


def cmd_train_eci(args) -> int:
    run = _load_config(args)
    seed = args.seed if args.seed is not None else run.eval_seeds[0]
    out = _out_dir(run)
    materials = harness.load_materials(run)
    cache = harness._TeacherCache(run, materials)

    config = run.identifier_config(seed)
    rng = np.random.default_rng([seed, 0, 1])
    model = IdentifierModel(len(materials.vocab), config, rng)
    teacher = cache.handle(seed) if (run.teacher_path or run.external_path) else None
    space = None
    external_seqs: list[list[int]] = []
    if teacher is not None:
        from causerl.conrt import TransferSpace
        from causerl.corpus import tokenize

        space = TransferSpace.build(2 * config.hidden, 2 * teacher.enc.hidden,
                                    config.transfer_dim, config.temperature,
                                    rng)
        external_seqs = [teacher.vocab.encode(tokenize(s.converted))
                         for s in materials.statements]

    dev_docs = set(materials.plan.dev)
    dev = [ex for ex in materials.examples if ex.doc_id in dev_docs]
    train = [ex for ex in materials.examples if ex.doc_id not in dev_docs]
    outcome = train_identifier(train, dev, external_seqs, model, teacher,
                               space, config, rng)

    from causerl.checkpoint import save_params
    save_params(out / "identifier.json", model.named_parameters())
    with open(out / "dev_predictions.jsonl", "w") as fh:
        for ex in dev:
            prob = predict_proba(ex, model)
            fh.write(json.dumps({
                "doc_id": ex.doc_id, "e1": list(ex.span_e1),
                "e2": list(ex.span_e2), "prob": prob, "label": ex.label,
                "pred": int(prob >= config.threshold),
            }, sort_keys=True) + "\n")
    write_manifest(out, run, [run.external_path, run.eci_path,
                              run.folds_path, run.teacher_path])
    print(f"identifier checkpoint: {out / 'identifier.json'}")
    if outcome["best_dev_f1"] >= 0:
        print(f"best dev F1: {outcome['best_dev_f1']:.4f}")
    return 0


def _write_report(report, run: RunConfig, out: Path) -> None:
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    write_manifest(out, run, [run.external_path, run.eci_path,
                              run.folds_path, run.teacher_path])
    for variant in report.variants():
        agg = report.aggregate(variant)
        print(f"{variant:>22}: P {agg['precision_mean']:.3f} "
              f"R {agg['recall_mean']:.3f} F1 {agg['f1_mean']:.3f} "
              f"(+/- {agg['f1_std']:.3f} over seeds {agg['seeds']})")


def cmd_evaluate(args) -> int:
    run = _load_config(args)
    if args.seed is not None:
        run.eval_seeds = [args.seed]
    out = _out_dir(run)
    report = harness.run_cross_validation(run)
    _write_report(report, run, out)
    return 0


def cmd_ablate(args) -> int:
    run = _load_config(args)
    if args.seed is not None:
        run.eval_seeds = [args.seed]
    out = _out_dir(run)
    report = harness.run_ablation(run)
    _write_report(report, run, out)
    return 0


def cmd_gradcheck(args) -> int:
    run = _load_config(args)
    out = _out_dir(run)
    result = harness.cmd_gradcheck(seeds=run.gradcheck_seeds,
                                   h=run.gradcheck_h, mutate=args.mutate)
    (out / "gradcheck.json").write_text(json.dumps(result, indent=2,
                                                   sort_keys=True))
    for name, surface in result["surfaces"].items():
        status = "pass" if surface["passed"] else "FAIL"
        print(f"{name:>22}: {status} (max rel error "
              f"{surface['max_rel_error']:.2e})")
    print(f"elapsed: {result['elapsed_seconds']}s")
    return 0 if result["all_passed"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="causerl")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=False):
        p.add_argument("--config", default="", help="flat JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="", help="output directory")
        if manifest:
            p.add_argument("--manifest", default="",
                           help="re-run a recorded manifest")

    common(sub.add_parser("gen-corpus", help="generate the synthetic corpus"))
    common(sub.add_parser("train-selfrl", help="stage-1 training"))
    common(sub.add_parser("train-eci", help="train one identifier"))
    common(sub.add_parser("evaluate", help="cross-validate"), manifest=True)
    common(sub.add_parser("ablate", help="run the ablation matrix"),
           manifest=True)
    p_grad = sub.add_parser("gradcheck", help="finite-difference gate")
    common(p_grad)
    p_grad.add_argument("--mutate", default=None, choices=["conrt-sign"],
                        help="inject a backward-rule defect (must fail)")

    args = parser.parse_args(argv)
    handlers = {
        "gen-corpus": cmd_gen_corpus,
        "train-selfrl": cmd_train_selfrl,
        "train-eci": cmd_train_eci,
        "evaluate": cmd_evaluate,
        "ablate": cmd_ablate,
        "gradcheck": cmd_gradcheck,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
