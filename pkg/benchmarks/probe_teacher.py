"""Does stage-1 training organize external statements by planted pattern?

Measures within-template vs between-template spread of teacher encodings
along the training trajectory.
"""

import json

import numpy as np

from causerl.corpus import tokenize
from causerl.harness import RunConfig, generate_materials
from causerl.conrt import TeacherHandle
from causerl.selfrl import SelfRLConfig, train_selfrl


def template_of(statement):
    toks = tokenize(statement.converted)
    comma = toks.index(",")
    return (toks[1], toks[comma + 2])


def cluster_stats(teacher, materials):
    by_template = {}
    for s in materials.statements:
        vec = teacher.encode_statement(
            teacher.vocab.encode(tokenize(s.converted)))
        by_template.setdefault(template_of(s), []).append(vec)
    centers = {t: np.mean(v, axis=0) for t, v in by_template.items()}
    within = np.mean([np.linalg.norm(v - centers[t], axis=1).mean()
                      for t, v in ((t, np.stack(v))
                                   for t, v in by_template.items())])
    grand = np.mean(list(centers.values()), axis=0)
    between = np.mean([np.linalg.norm(c - grand) for c in centers.values()])
    return within, between


def main():
    m = generate_materials(RunConfig())
    for lr, steps in [(0.0, 0), (1e-4, 100), (1e-4, 300), (1e-3, 50),
                      (1e-3, 150), (1e-3, 300)]:
        config = SelfRLConfig(lr=max(lr, 1e-9), max_steps=max(steps, 1),
                              seed=0)
        result = train_selfrl(m.statements, m.vocab, config)
        teacher = TeacherHandle.from_selfrl(result)
        within, between = cluster_stats(teacher, m)
        print(json.dumps({
            "lr": lr, "steps": steps,
            "within": round(float(within), 5),
            "between": round(float(between), 5),
            "ratio": round(float(between / within), 3),
            "final_loss": round(result.stats.records[-1]["loss"], 4),
        }), flush=True)


if __name__ == "__main__":
    main()
