import itertools
import json
import time

from causerl.harness import RunConfig, _TeacherCache, generate_materials, run_fold
from causerl.metrics import prf1


def score(run, m, cache, variant, seeds, folds):
    f1s = []
    for seed in seeds:
        tp = fp = fn = 0
        for fold in range(folds):
            row = run_fold(variant, seed, fold, m, run, cache)
            tp += row.tp
            fp += row.fp
            fn += row.fn
        f1s.append(prf1(tp, fp, fn)[2])
    return sum(f1s) / len(f1s)


def main():
    m = generate_materials(RunConfig())
    for T, lr in itertools.product([0.3, 0.5, 1.0], [1e-3, 2e-3]):
        run = RunConfig(id_temperature=T, id_lr=lr, id_max_epochs=25,
                        id_patience=8)
        cache = _TeacherCache(run, m)
        t0 = time.time()
        out = {v: round(score(run, m, cache, v, [0, 1], 5), 4)
               for v in ("baseline", "full", "no-selfrl")}
        print(json.dumps({"T": T, "lr": lr, "f1": out,
                          "sec": round(time.time() - t0)}), flush=True)


if __name__ == "__main__":
    main()
