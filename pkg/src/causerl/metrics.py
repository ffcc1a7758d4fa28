"""Precision / recall / F1 and the report structure used by the harness."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field


def prf1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Standard P/R/F1 with zero-denominator cases defined as 0."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be nonnegative")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def confusion(preds, labels) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for pred, lab in zip(preds, labels):
        if pred == 1 and lab == 1:
            tp += 1
        elif pred == 1 and lab == 0:
            fp += 1
        elif pred == 0 and lab == 1:
            fn += 1
    return tp, fp, fn


@dataclass
class FoldResult:
    variant: str
    seed: int
    fold: int
    tp: int
    fp: int
    fn: int
    n: int

    def prf(self) -> tuple[float, float, float]:
        return prf1(self.tp, self.fp, self.fn)


@dataclass
class MetricReport:
    """Per-fold rows plus per-variant aggregates.

    Aggregation pools tp/fp/fn over folds (micro) per seed, then averages
    over seeds; macro (mean of fold F1s) is reported alongside.
    """

    rows: list[FoldResult] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row: FoldResult) -> None:
        self.rows.append(row)

    def variants(self) -> list[str]:
        seen = []
        for row in self.rows:
            if row.variant not in seen:
                seen.append(row.variant)
        return seen

    def aggregate(self, variant: str) -> dict:
        rows = [r for r in self.rows if r.variant == variant]
        seeds = sorted({r.seed for r in rows})
        micro_f1s, micro_ps, micro_rs, macro_f1s = [], [], [], []
        for seed in seeds:
            srows = [r for r in rows if r.seed == seed]
            tp = sum(r.tp for r in srows)
            fp = sum(r.fp for r in srows)
            fn = sum(r.fn for r in srows)
            p, r, f1 = prf1(tp, fp, fn)
            micro_ps.append(p)
            micro_rs.append(r)
            micro_f1s.append(f1)
            macro_f1s.append(sum(x.prf()[2] for x in srows) / len(srows))
        n = len(seeds)
        mean = lambda xs: sum(xs) / n
        std = lambda xs: (sum((x - mean(xs)) ** 2 for x in xs) / n) ** 0.5
        return {
            "variant": variant,
            "seeds": seeds,
            "precision_mean": mean(micro_ps),
            "recall_mean": mean(micro_rs),
            "f1_mean": mean(micro_f1s),
            "f1_std": std(micro_f1s),
            "f1_per_seed": micro_f1s,
            "macro_f1_mean": mean(macro_f1s),
        }

    def to_json(self) -> str:
        doc = {
            "meta": self.meta,
            "rows": [vars(r) | dict(zip(("precision", "recall", "f1"), r.prf()))
                     for r in self.rows],
            "aggregates": [self.aggregate(v) for v in self.variants()],
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["variant", "seed", "fold", "tp", "fp", "fn", "n",
                         "precision", "recall", "f1"])
        for r in self.rows:
            p, rec, f1 = r.prf()
            writer.writerow([r.variant, r.seed, r.fold, r.tp, r.fp, r.fn, r.n,
                             f"{p:.6f}", f"{rec:.6f}", f"{f1:.6f}"])
        return buf.getvalue()

    def f1_mean(self, variant: str) -> float:
        return self.aggregate(variant)["f1_mean"]
