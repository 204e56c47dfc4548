"""Parameter dictionaries, initialisation and first-order optimizers."""

from __future__ import annotations

import numpy as np

from . import kernels

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        return kernels.softmax_rows(np.ascontiguousarray(logits[None, :]))[0]
    return kernels.softmax_rows(np.ascontiguousarray(logits))


def argmax_lowest(probs):
    """Row argmax; ties resolve to the lowest index (numpy's documented behaviour)."""
    return np.argmax(probs, axis=-1)


def glorot(rng, fan_in, fan_out, scale=1.0):
    std = scale * np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def clamp_logvar(raw):
    """Clamp and return the pass-through mask for the backward pass."""
    out = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
    mask = (raw > LOGVAR_MIN) & (raw < LOGVAR_MAX)
    return out, mask


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


def clip_grad_norm(grads, max_norm):
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value in {name}")


class SGD:
    def __init__(self, lr=0.05):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def make_optimizer(name, lr):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")
