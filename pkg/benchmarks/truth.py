"""Many-seed estimate of the true variant ordering for one configuration."""

import json
import sys
import time

from causerl.harness import RunConfig, _TeacherCache, generate_materials, run_fold
from causerl.metrics import prf1


def main():
    variants = sys.argv[1].split(",") if len(sys.argv) > 1 else \
        ["baseline", "full", "no-selfrl"]
    seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 8
    overrides = json.loads(sys.argv[3]) if len(sys.argv) > 3 else {}
    m = generate_materials(RunConfig())
    run = RunConfig(**overrides)
    cache = _TeacherCache(run, m)
    for variant in variants:
        f1s = []
        t0 = time.time()
        for seed in range(seeds):
            tp = fp = fn = 0
            for fold in range(5):
                row = run_fold(variant, seed, fold, m, run, cache)
                tp += row.tp
                fp += row.fp
                fn += row.fn
            f1s.append(round(prf1(tp, fp, fn)[2], 4))
        mean = sum(f1s) / len(f1s)
        print(json.dumps({"variant": variant, "mean": round(mean, 4),
                          "per_seed": f1s, "sec": round(time.time() - t0)}),
              flush=True)


if __name__ == "__main__":
    main()
