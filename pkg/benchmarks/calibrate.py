"""Scratch calibration driver for the synthetic experiment defaults.

Not part of the package; run ad hoc while tuning RunConfig defaults.
"""

import argparse
import time

import numpy as np

from causerl.corpus import tokenize
from causerl.harness import (
    RunConfig,
    _split_fold,
    _TeacherCache,
    generate_materials,
    run_fold,
)
from causerl.identifier import IdentifierModel, predict, train_identifier
from causerl.metrics import prf1


def verb_pools(materials):
    cause, effect = set(), set()
    for s in materials.statements:
        toks = tokenize(s.converted)
        comma = toks.index(",")
        cause.add(toks[1])
        effect.add(toks[comma + 2])
    return cause, effect


def error_breakdown(materials, model, fold, threshold, effect_pool):
    _, _, test_ex = _split_fold(materials, fold)
    fp = {"shuffled": 0, "mixed": 0}
    fn = 0
    tp = 0
    n_neg = {"shuffled": 0, "mixed": 0}
    for ex in test_ex:
        pred = predict(ex, model, threshold)
        if ex.label == 0:
            kind = ("shuffled" if ex.tokens[ex.span_e1[0]] in effect_pool
                    else "mixed")
            n_neg[kind] += 1
            if pred == 1:
                fp[kind] += 1
        else:
            tp += pred == 1
            fn += pred == 0
    return tp, fp, fn, n_neg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variants", nargs="+",
                    default=["baseline", "full"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--folds", type=int, default=2)
    ap.add_argument("--set", nargs="*", default=[],
                    help="RunConfig overrides key=value")
    ap.add_argument("--errors", action="store_true")
    args = ap.parse_args()

    overrides = {}
    for kv in args.set:
        key, val = kv.split("=", 1)
        field_type = type(getattr(RunConfig(), key))
        overrides[key] = field_type(val) if field_type is not bool \
            else val.lower() in ("1", "true")
    run = RunConfig(**overrides)
    m = generate_materials(run)
    cause_pool, effect_pool = verb_pools(m)
    cache = _TeacherCache(run, m)

    for variant in args.variants:
        t0 = time.time()
        f1s = []
        counts = np.zeros(3, dtype=int)
        for seed in args.seeds:
            for fold in range(args.folds):
                row = run_fold(variant, seed, fold, m, run, cache)
                f1s.append(row.prf()[2])
                counts += (row.tp, row.fp, row.fn)
        pooled = prf1(*counts)
        print(f"{variant:>22}: fold F1s {[round(x, 3) for x in f1s]} "
              f"pooled P={pooled[0]:.3f} R={pooled[1]:.3f} F1={pooled[2]:.3f} "
              f"({time.time() - t0:.1f}s)")


if __name__ == "__main__":
    main()
