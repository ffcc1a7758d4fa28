"""Compare the compiled LSTM kernel against the pure-numpy fallback.

Times the hot path of both training stages: one bidirectional encode of a
token sequence (forward) and its backward pass, across a few shapes, plus a
whole SelfRL step. Run with:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from causerl.kernels import pylstm

try:
    from causerl.kernels import _lstm as compiled
except ImportError:
    compiled = None


def time_call(fn, *args, repeat=200):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def bench_kernels():
    shapes = [(8, 32, 50), (16, 32, 50), (8, 16, 25), (32, 64, 50)]
    print(f"{'L x d x h':>14} {'python fwd':>12} {'cython fwd':>12} "
          f"{'python bwd':>12} {'cython bwd':>12} {'speedup':>8}")
    for L, d, h in shapes:
        rng = np.random.default_rng(0)
        x = rng.normal(size=(L, d))
        wx = rng.normal(size=(d, 4 * h)) * 0.3
        wh = rng.normal(size=(h, 4 * h)) * 0.3
        b = rng.normal(size=4 * h) * 0.3
        hs, gates, cs = pylstm.lstm_forward(x, wx, wh, b, False)
        dhs = rng.normal(size=hs.shape)

        py_f = time_call(pylstm.lstm_forward, x, wx, wh, b, False)
        py_b = time_call(pylstm.lstm_backward, dhs, x, wx, wh, hs, gates, cs,
                         False)
        if compiled is None:
            print(f"{L}x{d}x{h:>6} {py_f * 1e6:>10.1f}us {'-':>12} "
                  f"{py_b * 1e6:>10.1f}us {'-':>12} {'-':>8}")
            continue
        cy_f = time_call(compiled.lstm_forward, x, wx, wh, b, False)
        cy_b = time_call(compiled.lstm_backward, dhs, x, wx, wh, hs, gates,
                         cs, False)
        speedup = (py_f + py_b) / (cy_f + cy_b)
        print(f"{L}x{d}x{h:>6} {py_f * 1e6:>10.1f}us {cy_f * 1e6:>10.1f}us "
              f"{py_b * 1e6:>10.1f}us {cy_b * 1e6:>10.1f}us {speedup:>7.1f}x")


def bench_selfrl_step():
    import os

    from causerl.corpus import SyntheticSpec, build_vocabulary, \
        encode_corpus, generate_synthetic
    from causerl.selfrl import SelfRLConfig, train_selfrl

    spec = SyntheticSpec(n_external_statements=96, n_eci_examples=10)
    corpus = generate_synthetic(spec)
    vocab = build_vocabulary(corpus.statements, corpus.examples)
    encode_corpus(corpus.statements, corpus.examples, vocab)
    config = SelfRLConfig(max_steps=10)
    start = time.perf_counter()
    train_selfrl(corpus.statements, vocab, config)
    per_step = (time.perf_counter() - start) / config.max_steps
    from causerl import kernels
    print(f"\nSelfRL step (batch 48, h=50, {kernels.BACKEND} backend): "
          f"{per_step * 1e3:.1f} ms")
    if kernels.BACKEND == "cython":
        print("re-run with CAUSERL_KERNELS=python to time the fallback")


if __name__ == "__main__":
    if compiled is None:
        print("compiled kernel unavailable; showing python fallback only\n")
    bench_kernels()
    bench_selfrl_step()
