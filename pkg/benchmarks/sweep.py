"""Grid sweep over desk-scale training knobs; prints one line per config."""

import itertools
import json
import sys
import time

from causerl.harness import RunConfig, _TeacherCache, generate_materials, run_fold
from causerl.metrics import prf1


def score(run, materials, cache, variant, seeds, folds):
    f1s = []
    for seed in seeds:
        tp = fp = fn = 0
        for fold in range(folds):
            row = run_fold(variant, seed, fold, materials, run, cache)
            tp += row.tp
            fp += row.fp
            fn += row.fn
        f1s.append(prf1(tp, fp, fn)[2])
    return sum(f1s) / len(f1s)


def main():
    variants = sys.argv[1].split(",") if len(sys.argv) > 1 else \
        ["baseline", "full", "no-selfrl"]
    seeds = [0, 1]
    folds = 5
    grid = {
        "id_temperature": [1.0, 5.0],
        "id_lr": [2e-3, 5e-3],
        "id_max_epochs": [12, 25],
    }
    materials = generate_materials(RunConfig())
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        run = RunConfig(**overrides)
        cache = _TeacherCache(run, materials)
        t0 = time.time()
        result = {v: round(score(run, materials, cache, v, seeds, folds), 4)
                  for v in variants}
        print(json.dumps({"config": overrides, "f1": result,
                          "sec": round(time.time() - t0, 1)}), flush=True)


if __name__ == "__main__":
    main()
