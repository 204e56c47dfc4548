"""Time each kernel under its numba and numpy implementations.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Inputs are sized like one training batch of the default model (batch 32,
vocabulary 10000, 50 topics, about 40 tokens per document) plus a full
confusion-matrix pass over 100k predictions. Numba variants are called once
before timing so compilation is excluded. Outputs of both paths are checked
for agreement before anything is timed.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from narrative_cantm import kernels


def make_inputs(seed=0, batch=32, vocab=10_000, k=50, dim=500, tokens=40, n_pred=100_000):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(batch, vocab))
    counts = rng.poisson(0.003, size=(batch, vocab)).astype(np.float64)
    mu, lv = rng.normal(size=(batch, k)), rng.normal(size=(batch, k))
    lengths = rng.integers(tokens // 2, tokens * 2, size=batch)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    rows = rng.normal(size=(offsets[-1], dim))
    scores = rng.normal(size=offsets[-1])
    weights, _ = kernels.segment_attention_numpy(rows, scores, offsets)
    d_pooled = rng.normal(size=(batch, dim))
    gold = rng.integers(0, 7, n_pred)
    pred = rng.integers(0, 7, n_pred)
    return {
        "softmax_rows": (logits,),
        "multinomial_nll": (logits, counts),
        "gaussian_kl": (mu, lv),
        "segment_attention": (rows, scores, offsets),
        "segment_attention_backward": (rows, weights, offsets, d_pooled),
        "confusion_counts": (gold, pred, 7),
    }


def _flatten(out):
    return out if isinstance(out, tuple) else (out,)


def run(repeat=20, seed=0):
    if not kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    results = []
    for name, args in make_inputs(seed).items():
        f_np = getattr(kernels, f"{name}_numpy")
        f_nb = getattr(kernels, f"{name}_numba")
        for a, b in zip(_flatten(f_np(*args)), _flatten(f_nb(*args))):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat))
        results.append({"kernel": name, "numpy_ms": 1e3 * t_np, "numba_ms": 1e3 * t_nb,
                        "speedup": t_np / t_nb})
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write results here as JSON")
    args = ap.parse_args(argv)
    results = run(args.repeat, args.seed)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for r in results:
        print(f"{r['kernel']:<28}{r['numpy_ms']:>12.3f}{r['numba_ms']:>12.3f}{r['speedup']:>9.2f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
