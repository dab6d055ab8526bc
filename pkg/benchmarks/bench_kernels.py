"""Compiled vs pure-Python kernels: edit distance and word-piece training.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import os
import time

import numpy as np

from niqqudless import kernels, tokenizer
from niqqudless.synthetic import toy_sentences


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def edit_workload(backend, pairs):
    def run():
        for a, b in pairs:
            backend.edit_ops(a, b)

    return run


def training_workload(backend, corpus, size):
    def run():
        saved = tokenizer.kernels.count_pairs, tokenizer.kernels.merge_pair
        tokenizer.kernels.count_pairs, tokenizer.kernels.merge_pair = backend.count_pairs, backend.merge_pair
        try:
            tokenizer.train_wordpiece(corpus, size)
        finally:
            tokenizer.kernels.count_pairs, tokenizer.kernels.merge_pair = saved

    return run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--pairs", type=int, default=300)
    p.add_argument("--sentences", type=int, default=2000)
    p.add_argument("--vocab-size", type=int, default=400)
    args = p.parse_args()

    found = kernels.backends()
    if "cython" not in found:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    pairs = [(rng.integers(0, 30, 200).tolist(), rng.integers(0, 30, 200).tolist()) for _ in range(args.pairs)]
    corpus = toy_sentences(args.sentences, 0)

    rows = []
    for label, make in (
        (f"edit_ops x{args.pairs} (len 200)", lambda b: edit_workload(b, pairs)),
        (f"train_wordpiece {args.sentences} lines -> {args.vocab_size}", lambda b: training_workload(b, corpus, args.vocab_size)),
    ):
        t_py = best_of(make(found["python"]), args.repeat)
        t_cy = best_of(make(found["cython"]), args.repeat)
        rows.append((label, t_py, t_cy))

    print(f"default backend: {kernels.BACKEND} (set NIQQUDLESS_PURE_PYTHON=1 to force the fallback)")
    print(f"{'workload':<44}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for label, t_py, t_cy in rows:
        print(f"{label:<44}{t_py:>10.3f}{t_cy:>10.3f}{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
