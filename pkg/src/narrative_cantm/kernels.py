"""Numeric inner loops used in training and evaluation.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics. The numba path is used when numba imports
and ``NARRATIVE_CANTM_DISABLE_NUMBA`` is unset (or ``0``). Both variants are
always reachable as ``<name>_numpy`` / ``<name>_numba`` for testing and
benchmarking.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("NARRATIVE_CANTM_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------- numpy path


def softmax_rows_numpy(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def multinomial_nll_numpy(logits, counts):
    """Per-row -sum(counts * log softmax(logits)) and its gradient w.r.t. logits."""
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    nll = -(counts * logp).sum(axis=1)
    grad = counts.sum(axis=1, keepdims=True) * np.exp(logp) - counts
    return nll, grad


def gaussian_kl_numpy(mu, logvar):
    """Row-wise KL(N(mu, exp(logvar)) || N(0, I))."""
    return 0.5 * (mu * mu + np.exp(logvar) - 1.0 - logvar).sum(axis=1)


def segment_attention_numpy(rows, scores, offsets):
    """Softmax ``scores`` within each segment and pool ``rows`` by those weights.

    Segment b spans ``rows[offsets[b]:offsets[b+1]]``. Empty segments pool to zero.
    """
    n_seg = len(offsets) - 1
    weights = np.zeros_like(scores)
    pooled = np.zeros((n_seg, rows.shape[1]))
    for b in range(n_seg):
        lo, hi = offsets[b], offsets[b + 1]
        if hi == lo:
            continue
        s = scores[lo:hi]
        e = np.exp(s - s.max())
        w = e / e.sum()
        weights[lo:hi] = w
        pooled[b] = w @ rows[lo:hi]
    return weights, pooled


def segment_attention_backward_numpy(rows, weights, offsets, d_pooled):
    """Gradients of pooled outputs w.r.t. ``rows`` and the pre-softmax ``scores``."""
    d_rows = np.zeros_like(rows)
    d_scores = np.zeros_like(weights)
    for b in range(len(offsets) - 1):
        lo, hi = offsets[b], offsets[b + 1]
        if hi == lo:
            continue
        w = weights[lo:hi]
        g = d_pooled[b]
        d_rows[lo:hi] = w[:, None] * g[None, :]
        dw = rows[lo:hi] @ g
        d_scores[lo:hi] = w * (dw - (w * dw).sum())
    return d_rows, d_scores


def confusion_counts_numpy(gold, pred, n_classes):
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (gold, pred), 1)
    return out


# ---------------------------------------------------------------- numba path

if NUMBA_AVAILABLE:
    # fast-math minus the no-NaN/no-Inf assumptions, so divergence still surfaces
    _FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}

    @numba.njit(cache=True, fastmath=_FAST, error_model="numpy")
    def softmax_rows_numba(logits):
        n, v = logits.shape
        out = np.empty_like(logits)
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, v):
                m = max(m, logits[i, j])
            s = 0.0
            for j in range(v):
                e = math.exp(logits[i, j] - m)
                out[i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(v):
                out[i, j] *= inv
        return out

    @numba.njit(cache=True, fastmath=_FAST, error_model="numpy")
    def multinomial_nll_numba(logits, counts):
        n, v = logits.shape
        nll = np.empty(n)
        grad = np.empty_like(logits)
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, v):
                m = max(m, logits[i, j])
            s = 0.0
            total = 0.0
            for j in range(v):
                e = math.exp(logits[i, j] - m)
                grad[i, j] = e
                s += e
                total += counts[i, j]
            lse = m + math.log(s)
            scale = total / s
            acc = 0.0
            for j in range(v):
                c = counts[i, j]
                grad[i, j] = scale * grad[i, j] - c
                if c != 0.0:
                    acc -= c * (logits[i, j] - lse)
            nll[i] = acc
        return nll, grad

    @numba.njit(cache=True, error_model="numpy")
    def gaussian_kl_numba(mu, logvar):
        n, k = mu.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(k):
                acc += mu[i, j] * mu[i, j] + math.exp(logvar[i, j]) - 1.0 - logvar[i, j]
            out[i] = 0.5 * acc
        return out

    @numba.njit(cache=True, error_model="numpy")
    def segment_attention_numba(rows, scores, offsets):
        n_seg = offsets.shape[0] - 1
        d = rows.shape[1]
        weights = np.zeros_like(scores)
        pooled = np.zeros((n_seg, d))
        for b in range(n_seg):
            lo = offsets[b]
            hi = offsets[b + 1]
            if hi == lo:
                continue
            m = scores[lo]
            for t in range(lo + 1, hi):
                if scores[t] > m:
                    m = scores[t]
            s = 0.0
            for t in range(lo, hi):
                e = math.exp(scores[t] - m)
                weights[t] = e
                s += e
            for t in range(lo, hi):
                weights[t] /= s
                w = weights[t]
                for j in range(d):
                    pooled[b, j] += w * rows[t, j]
        return weights, pooled

    @numba.njit(cache=True, error_model="numpy")
    def segment_attention_backward_numba(rows, weights, offsets, d_pooled):
        d = rows.shape[1]
        d_rows = np.zeros_like(rows)
        d_scores = np.zeros_like(weights)
        for b in range(offsets.shape[0] - 1):
            lo = offsets[b]
            hi = offsets[b + 1]
            if hi == lo:
                continue
            mean_dw = 0.0
            for t in range(lo, hi):
                dw = 0.0
                for j in range(d):
                    d_rows[t, j] = weights[t] * d_pooled[b, j]
                    dw += rows[t, j] * d_pooled[b, j]
                d_scores[t] = dw
                mean_dw += weights[t] * dw
            for t in range(lo, hi):
                d_scores[t] = weights[t] * (d_scores[t] - mean_dw)
        return d_rows, d_scores

    @numba.njit(cache=True, error_model="numpy")
    def confusion_counts_numba(gold, pred, n_classes):
        out = np.zeros((n_classes, n_classes), dtype=np.int64)
        for i in range(gold.shape[0]):
            out[gold[i], pred[i]] += 1
        return out

else:  # pragma: no cover
    softmax_rows_numba = softmax_rows_numpy
    multinomial_nll_numba = multinomial_nll_numpy
    gaussian_kl_numba = gaussian_kl_numpy
    segment_attention_numba = segment_attention_numpy
    segment_attention_backward_numba = segment_attention_backward_numpy
    confusion_counts_numba = confusion_counts_numpy


KERNELS = (
    "softmax_rows",
    "multinomial_nll",
    "gaussian_kl",
    "segment_attention",
    "segment_attention_backward",
    "confusion_counts",
)


def _select(name):
    return globals()[f"{name}_{'numba' if USE_NUMBA else 'numpy'}"]


softmax_rows = _select("softmax_rows")
multinomial_nll = _select("multinomial_nll")
gaussian_kl = _select("gaussian_kl")
segment_attention = _select("segment_attention")
segment_attention_backward = _select("segment_attention_backward")
confusion_counts = _select("confusion_counts")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
