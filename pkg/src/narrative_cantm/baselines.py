"""Comparison models sharing CANTM's predict contract.

* ``BowLogReg``  - multinomial logistic regression on bag-of-words counts with L2
* ``ScholarModel`` - supervised VAE with the gold label fed to the encoder during
  training and a zero label vector at inference
* ``FrozenHead`` - 500-unit tanh layer plus softmax over fixed external features
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import kernels
from .cantm import TrainingDivergedError
from .corpus import stratified_holdout
from .encoders import ExternalEncoder
from .labels import CLASSES, N_CLASSES, label_index
from .nn import clamp_logvar, clip_grad_norm, copy_params, glorot, make_optimizer, softmax
from .preprocess import TruncationStrategy, Vocabulary, bow_matrix, build_vocab, document_tokens

log = logging.getLogger(__name__)


def _labels(docs):
    if any(d.label is None for d in docs):
        raise ValueError("training documents must be labeled")
    return np.array([label_index(d.label) for d in docs], dtype=np.int64)


def _ce(logits, y):
    m = logits.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))[:, 0]
    ce = lse - logits[np.arange(len(y)), y]
    g = np.exp(logits - lse[:, None])
    g[np.arange(len(y)), y] -= 1.0
    return ce, g


class _Predictor:
    """Shared label helpers; subclasses implement ``predict_proba(docs)``."""

    def predict_labels(self, docs) -> list:
        p = self.predict_proba(docs)
        return [CLASSES[i] for i in np.argmax(p, axis=1)]

    def predict(self, doc):
        p = self.predict_proba([doc])[0]
        return CLASSES[int(np.argmax(p))], p


# ------------------------------------------------------------ BOW-LR


class _ConfigIO:
    def to_dict(self):
        d = asdict(self)
        if "truncation" in d:
            d["truncation"] = self.truncation.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "truncation" in d:
            d["truncation"] = TruncationStrategy.from_dict(d["truncation"])
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class LogRegConfig(_ConfigIO):
    lam: float = 1e-2
    tol: float = 1e-6
    max_iter: int = 3000
    seed: int = 0
    truncation: TruncationStrategy = field(default_factory=lambda: TruncationStrategy.head(400))
    min_df: int = 2
    max_vocab: int = 10000


def logreg_objective(W, b, X, y, lam):
    """Mean cross-entropy + lam/2 ||W||^2 and its gradients (bias unregularised)."""
    ce, g = _ce(X @ W + b, y)
    n = len(y)
    f = ce.mean() + 0.5 * lam * float((W * W).sum())
    gW = X.T @ g / n + lam * W
    gb = g.sum(axis=0) / n
    return f, gW, gb


def fit_logreg(X, y, lam, tol=1e-6, max_iter=3000, seed=0, init_scale=0.01):
    """Block gradient descent with Armijo backtracking until the gradient max-norm < ``tol``.

    Weights and intercept keep separate step sizes: with a large penalty the
    weight curvature would otherwise throttle the unpenalised intercept.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, init_scale, size=(X.shape[1], N_CLASSES))
    b = np.zeros(N_CLASSES)
    f, gW, gb = logreg_objective(W, b, X, y, lam)
    steps = [1.0, 1.0]
    for it in range(max_iter):
        if max(np.abs(gW).max(), np.abs(gb).max()) < tol:
            break
        for blk in (0, 1):
            g = gW if blk == 0 else gb
            sq = float((g * g).sum())
            if sq == 0.0:
                continue
            step = steps[blk]
            while True:
                W2, b2 = (W - step * gW, b) if blk == 0 else (W, b - step * gb)
                f2, gW2, gb2 = logreg_objective(W2, b2, X, y, lam)
                if f2 <= f - 0.5 * step * sq or step < 1e-12:
                    break
                step *= 0.5
            W, b, f, gW, gb = W2, b2, f2, gW2, gb2
            steps[blk] = step * 2.0
    return W, b, f


class BowLogReg(_Predictor):
    kind = "bow_lr"

    def __init__(self, config: LogRegConfig, vocab: Vocabulary, params: dict, final_loss=float("nan")):
        self.config = config
        self.vocab = vocab
        self.params = params
        self.final_loss = final_loss

    def features(self, docs):
        toks = [document_tokens(d.full_text, self.config.truncation) for d in docs]
        return bow_matrix(toks, self.vocab)

    def predict_proba(self, docs):
        if not docs:
            return np.zeros((0, N_CLASSES))
        return softmax(self.features(docs) @ self.params["W"] + self.params["b"])

    def expected_shapes(self):
        return {"W": (len(self.vocab), N_CLASSES), "b": (N_CLASSES,)}


def train_bow_lr(docs, lam: float | None = None, config: LogRegConfig | None = None) -> BowLogReg:
    config = config or LogRegConfig()
    if lam is not None:
        config = replace(config, lam=lam)
    y = _labels(docs)
    toks = [document_tokens(d.full_text, config.truncation) for d in docs]
    vocab = build_vocab(toks, config.min_df, config.max_vocab)
    X = bow_matrix(toks, vocab)
    W, b, f = fit_logreg(X, y, config.lam, config.tol, config.max_iter, config.seed)
    return BowLogReg(config, vocab, {"W": W, "b": b}, f)


# ------------------------------------------------------------ SCHOLAR


@dataclass(frozen=True)
class ScholarConfig(_ConfigIO):
    embedding_dim: int = 500
    K: int = 20
    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 0.01
    optimizer: str = "adam"
    grad_clip: float = 10.0
    label_dropout: float = 0.5
    seed: int = 0
    dev_fraction: float = 0.2
    truncation: TruncationStrategy = field(default_factory=lambda: TruncationStrategy.head(400))
    min_df: int = 2
    max_vocab: int = 10000


def scholar_shapes(V, E, K):
    C = N_CLASSES
    return {
        "emb_W": (V + C, E), "emb_b": (E,),
        "mu_W": (E, K), "mu_b": (K,),
        "lv_W": (E, K), "lv_b": (K,),
        "dec_W": (K, V), "dec_b": (V,),
        "cls_W": (K, C), "cls_b": (C,),
    }


def scholar_forward_backward(params, X, Yin, y, eps, want_grad=True):
    """Mean of recon + KL + CE for a batch.

    The encoder sees raw word counts with the label block ``Yin`` appended
    (one-hot gold in training, zeros at inference), so word evidence outweighs
    the label slot. Topic proportions are softmax(z).
    """
    B = X.shape[0]
    In = np.concatenate([X, Yin], axis=1)
    A = np.tanh(In @ params["emb_W"] + params["emb_b"])
    mu = A @ params["mu_W"] + params["mu_b"]
    lv, mask = clamp_logvar(A @ params["lv_W"] + params["lv_b"])
    s = np.exp(0.5 * lv)
    Z = mu + s * eps
    T = softmax(Z)
    rec, dL = kernels.multinomial_nll(np.ascontiguousarray(T @ params["dec_W"] + params["dec_b"]),
                                      np.ascontiguousarray(X))
    kl = kernels.gaussian_kl(np.ascontiguousarray(mu), np.ascontiguousarray(lv))
    ce, dC = _ce(T @ params["cls_W"] + params["cls_b"], y)
    terms = {"recon": float(rec.mean()), "kl": float(kl.mean()), "ce": float(ce.mean())}
    total = sum(terms.values())
    if not np.isfinite(total):
        raise TrainingDivergedError(f"non-finite SCHOLAR loss {terms}")
    if not want_grad:
        return total, None
    g = 1.0 / B
    dL *= g
    dC *= g
    grads = {"dec_W": T.T @ dL, "dec_b": dL.sum(axis=0), "cls_W": T.T @ dC, "cls_b": dC.sum(axis=0)}
    dT = dL @ params["dec_W"].T + dC @ params["cls_W"].T
    dZ = T * (dT - (T * dT).sum(axis=1, keepdims=True))
    dmu = dZ + g * mu
    dlv = (dZ * eps * 0.5 * s + g * 0.5 * (np.exp(lv) - 1.0)) * mask
    grads.update(mu_W=A.T @ dmu, mu_b=dmu.sum(axis=0), lv_W=A.T @ dlv, lv_b=dlv.sum(axis=0))
    dA = (dmu @ params["mu_W"].T + dlv @ params["lv_W"].T) * (1.0 - A * A)
    grads.update(emb_W=In.T @ dA, emb_b=dA.sum(axis=0))
    return total, grads


class ScholarModel(_Predictor):
    kind = "scholar"

    def __init__(self, config: ScholarConfig, vocab: Vocabulary, params: dict):
        self.config = config
        self.vocab = vocab
        self.params = params
        self.history: list = []

    @property
    def embedding_dim(self):
        return self.params["emb_W"].shape[1]

    def features(self, docs):
        toks = [document_tokens(d.full_text, self.config.truncation) for d in docs]
        return bow_matrix(toks, self.vocab)

    def proba_from_bow(self, X):
        """Inference at the posterior mean with the label slot zeroed."""
        p = self.params
        In = np.concatenate([X, np.zeros((X.shape[0], N_CLASSES))], axis=1)
        A = np.tanh(In @ p["emb_W"] + p["emb_b"])
        T = softmax(A @ p["mu_W"] + p["mu_b"])
        return softmax(T @ p["cls_W"] + p["cls_b"])

    def predict_proba(self, docs):
        if not docs:
            return np.zeros((0, N_CLASSES))
        return self.proba_from_bow(self.features(docs))

    def expected_shapes(self):
        return scholar_shapes(len(self.vocab), self.config.embedding_dim, self.config.K)


def _init_from_shapes(rng, shapes):
    return {k: (np.zeros(s) if len(s) == 1 else glorot(rng, *s, scale=0.1 if k.startswith("lv_") else 1.0))
            for k, s in shapes.items()}


def _select_best(score, best):
    return best is None or score >= best[0]


def train_scholar(docs, embedding_dim: int | None = None, config: ScholarConfig | None = None) -> ScholarModel:
    config = config or ScholarConfig()
    if embedding_dim is not None:
        config = replace(config, embedding_dim=embedding_dim)
    from .evaluation import macro_f1_indices

    _labels(docs)
    tr_docs, dev_docs = (stratified_holdout(docs, config.dev_fraction, config.seed)
                         if config.dev_fraction > 0 else (list(docs), []))
    toks = [document_tokens(d.full_text, config.truncation) for d in docs]
    vocab = build_vocab(toks, config.min_df, config.max_vocab)
    rng = np.random.default_rng(config.seed)
    params = _init_from_shapes(rng, scholar_shapes(len(vocab), config.embedding_dim, config.K))
    model = ScholarModel(config, vocab, params)
    if config.epochs == 0:
        return model
    X = model.features(tr_docs)
    y = _labels(tr_docs)
    bg = np.log(X.sum(axis=0) + 1.0)
    params["dec_b"] = bg - np.log(np.exp(bg).sum())
    Xd, yd = (model.features(dev_docs), _labels(dev_docs)) if dev_docs else (None, None)
    onehot = np.eye(N_CLASSES)
    opt = make_optimizer(config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed + 1)
    best = None
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start : start + config.batch_size]
            eps = rng.standard_normal((len(idx), config.K))
            try:
                # rows whose label slot is zeroed train the path used at inference
                keep = rng.random(len(idx)) >= config.label_dropout
                Yin = onehot[y[idx]] * keep[:, None]
                _, grads = scholar_forward_backward(params, X[idx], Yin, y[idx], eps)
            except TrainingDivergedError as e:
                raise TrainingDivergedError(f"epoch {epoch}: {e}") from None
            if config.grad_clip > 0:
                clip_grad_norm(grads, config.grad_clip)
            opt.step(params, grads)
        if Xd is not None:
            score = macro_f1_indices(yd, np.argmax(model.proba_from_bow(Xd), axis=1))
            model.history.append({"epoch": epoch, "dev_macro_f1": score})
            if _select_best(score, best):
                best = (score, copy_params(params))
    if best is not None:
        model.params = best[1]
    return model


# ------------------------------------------------------------ frozen-feature head


@dataclass(frozen=True)
class HeadConfig(_ConfigIO):
    hidden: int = 500
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 0.05
    optimizer: str = "sgd"
    seed: int = 0


def head_forward_backward(params, F, y, want_grad=True):
    A = np.tanh(F @ params["W1"] + params["b1"])
    ce, dC = _ce(A @ params["W2"] + params["b2"], y)
    f = float(ce.mean())
    if not want_grad:
        return f, None
    dC /= len(y)
    dA = (dC @ params["W2"].T) * (1.0 - A * A)
    return f, {"W2": A.T @ dC, "b2": dC.sum(axis=0), "W1": F.T @ dA, "b1": dA.sum(axis=0)}


class FrozenHead(_Predictor):
    kind = "frozen_head"

    def __init__(self, config: HeadConfig, encoder: ExternalEncoder, params: dict):
        self.config = config
        self.encoder = encoder
        self.params = params

    def proba_from_features(self, F):
        A = np.tanh(F @ self.params["W1"] + self.params["b1"])
        return softmax(A @ self.params["W2"] + self.params["b2"])

    def predict_proba(self, docs):
        if not docs:
            return np.zeros((0, N_CLASSES))
        return self.proba_from_features(np.stack([self.encoder.lookup(d.id) for d in docs]))

    def expected_shapes(self):
        D, H = self.encoder.dim, self.config.hidden
        return {"W1": (D, H), "b1": (H,), "W2": (H, N_CLASSES), "b2": (N_CLASSES,)}


def train_frozen_head(encoder: ExternalEncoder, docs, config: HeadConfig | None = None) -> FrozenHead:
    """Train the feed-forward head on fixed features looked up by document id."""
    config = config or HeadConfig()
    y = _labels(docs)
    F = np.stack([encoder.lookup(d.id) for d in docs])
    rng = np.random.default_rng(config.seed)
    D, H = F.shape[1], config.hidden
    params = {"W1": glorot(rng, D, H), "b1": np.zeros(H), "W2": glorot(rng, H, N_CLASSES),
              "b2": np.zeros(N_CLASSES)}
    opt = make_optimizer(config.optimizer, config.learning_rate)
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = head_forward_backward(params, F[idx], y[idx])
            opt.step(params, grads)
    return FrozenHead(config, encoder, params)
