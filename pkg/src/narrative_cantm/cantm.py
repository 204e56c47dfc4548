"""Classification-aware neural topic model.

Two stacked VAEs share the encoder output ``h``:

    M1 encoder      q(z | h)            -> mu1, logvar1          (K)
    M1 decoder      p(x_bow | z)        softmax(z W + b)         (V)
    M1 classifier   yhat = f(z)         softmax(z W + b)         (7)
    class decoder   p(x_bow | yhat)     softmax(yhat W + b)      (V)
    M2 encoder      q(z_s | h, yhat)    -> mu2, logvar2          (K_s)
    M2 decoder      p(x_bow | z_s, yhat) and p(y | z_s)

The objective is a weighted sum of three multinomial reconstruction terms,
two Gaussian KL terms against N(0, I) and two cross-entropies against the
gold label, averaged over the batch. Gradients are derived by hand and
checked against finite differences in the test suite.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import kernels
from .encoders import EncodedText, EncoderSpec, make_encoder
from .labels import CLASSES, N_CLASSES, label_index
from .nn import clamp_logvar, clip_grad_norm, copy_params, glorot, make_optimizer, softmax
from .preprocess import TruncationStrategy, Vocabulary, bow_matrix, build_vocab, document_tokens

log = logging.getLogger(__name__)

LOSS_TERMS = ("recon_m1", "kl_m1", "ce_m1", "recon_clsdec", "recon_m2", "kl_m2", "ce_m2")


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class CantmConfig:
    K: int = 50
    K_s: int = 25
    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 0.1
    optimizer: str = "sgd"
    seed: int = 0
    w_recon1: float = 1.0
    w_kl1: float = 1.0
    w_ce1: float = 1.0
    w_clsdec: float = 1.0
    w_recon2: float = 1.0
    w_kl2: float = 1.0
    w_ce2: float = 1.0
    truncation: TruncationStrategy = field(default_factory=lambda: TruncationStrategy.head(400))
    min_df: int = 2
    max_vocab: int = 10000
    dev_fraction: float = 0.2
    teacher_forcing: bool = False
    grad_clip: float = 10.0  # global L2 norm; 0 disables

    def __post_init__(self):
        for name in ("K", "K_s", "batch_size", "min_df", "max_vocab"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if any(w < 0 for w in self.weights):
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.dev_fraction < 1.0:
            raise ValueError("dev_fraction must be in [0, 1)")

    @property
    def weights(self) -> tuple:
        return (self.w_recon1, self.w_kl1, self.w_ce1, self.w_clsdec,
                self.w_recon2, self.w_kl2, self.w_ce2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["truncation"] = self.truncation.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "CantmConfig":
        d = dict(d)
        d["truncation"] = TruncationStrategy.from_dict(d["truncation"])
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class GaussianParams:
    mu: np.ndarray
    logvar: np.ndarray


@dataclass
class LatentSample:
    z: np.ndarray
    source: str = "m1"


@dataclass
class LossBreakdown:
    recon_m1: float
    kl_m1: float
    ce_m1: float
    recon_clsdec: float
    recon_m2: float
    kl_m2: float
    ce_m2: float
    total: float

    def terms(self) -> dict:
        return {k: getattr(self, k) for k in LOSS_TERMS}


# ------------------------------------------------------------ parameters


def param_shapes(D_h: int, K: int, K_s: int, V: int) -> dict:
    C = N_CLASSES
    return {
        "m1_mu_W": (D_h, K), "m1_mu_b": (K,),
        "m1_lv_W": (D_h, K), "m1_lv_b": (K,),
        "dec1_W": (K, V), "dec1_b": (V,),
        "cls_W": (K, C), "cls_b": (C,),
        "clsdec_W": (C, V), "clsdec_b": (V,),
        "m2_mu_W": (D_h + C, K_s), "m2_mu_b": (K_s,),
        "m2_lv_W": (D_h + C, K_s), "m2_lv_b": (K_s,),
        "dec2_W": (K_s + C, V), "dec2_b": (V,),
        "head2_W": (K_s, C), "head2_b": (C,),
    }


def init_params(rng, D_h: int, K: int, K_s: int, V: int) -> dict:
    p = {}
    for name, shape in param_shapes(D_h, K, K_s, V).items():
        if len(shape) == 1:
            p[name] = np.zeros(shape)
        elif "_lv_" in name:
            p[name] = glorot(rng, *shape, scale=0.1)
        else:
            p[name] = glorot(rng, *shape)
    return p


def zero_params(D_h: int, K: int, K_s: int, V: int) -> dict:
    return {k: np.zeros(s) for k, s in param_shapes(D_h, K, K_s, V).items()}


# ------------------------------------------------------------ sub-modules


def _rows(x):
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def _as_h(h):
    return h.h if isinstance(h, EncodedText) else h


def m1_encode(h, params) -> GaussianParams:
    """Posterior parameters of q(z | h); accepts one vector or a batch."""
    h = _as_h(h)
    H = _rows(h)
    D = params["m1_mu_W"].shape[0]
    if H.shape[1] != D:
        raise ValueError(f"m1_encode expects h of dim {D}, got {H.shape[1]}")
    mu = H @ params["m1_mu_W"] + params["m1_mu_b"]
    lv, _ = clamp_logvar(H @ params["m1_lv_W"] + params["m1_lv_b"])
    if np.ndim(h) == 1:
        return GaussianParams(mu[0], lv[0])
    return GaussianParams(mu, lv)


def reparameterize(gp: GaussianParams, noise, source: str = "m1") -> LatentSample:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != np.shape(gp.mu):
        raise ValueError(f"noise shape {noise.shape} != parameter shape {np.shape(gp.mu)}")
    return LatentSample(gp.mu + np.exp(0.5 * gp.logvar) * noise, source)


def kl_std_normal(gp: GaussianParams):
    """KL(N(mu, diag exp(logvar)) || N(0, I)); a scalar for 1-D input, per row otherwise."""
    mu, lv = np.asarray(gp.mu, dtype=np.float64), np.asarray(gp.logvar, dtype=np.float64)
    out = kernels.gaussian_kl(np.ascontiguousarray(_rows(mu)), np.ascontiguousarray(_rows(lv)))
    return float(out[0]) if mu.ndim == 1 else out


def decode_bow(inp, W, b):
    """Categorical over the vocabulary: softmax(inp @ W + b)."""
    x = np.asarray(inp, dtype=np.float64)
    if x.shape[-1] != W.shape[0]:
        raise ValueError(f"decoder expects input dim {W.shape[0]}, got {x.shape[-1]}")
    return softmax(x @ W + b)


def bow_nll(probs, counts):
    """-sum_w count(w) log p(w), per row for 2-D input."""
    counts = np.asarray(counts, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    prod = np.where(counts > 0, counts * logp, 0.0)
    return -prod.sum(axis=-1)


def _z(z):
    return z.z if isinstance(z, LatentSample) else np.asarray(z, dtype=np.float64)


def classify_m1(z, params):
    """Class distribution yhat = softmax(z W + b)."""
    return softmax(_z(z) @ params["cls_W"] + params["cls_b"])


def _m2_input(h, yhat):
    h, yhat = np.asarray(h, dtype=np.float64), np.asarray(yhat, dtype=np.float64)
    return np.concatenate([h, yhat], axis=-1)


def m2_encode(h, yhat, params) -> GaussianParams:
    h = _as_h(h)
    expected = params["m2_mu_W"].shape[0]
    x = _m2_input(h, yhat)
    if x.shape[-1] != expected:
        raise ValueError(f"m2_encode expects h of dim {expected - N_CLASSES} and 7 class probabilities")
    mu = x @ params["m2_mu_W"] + params["m2_mu_b"]
    lv, _ = clamp_logvar(x @ params["m2_lv_W"] + params["m2_lv_b"])
    return GaussianParams(mu, lv)


def m2_decode(z_s, yhat, params):
    """(p(x_bow | z_s, yhat), p(y | z_s))."""
    zs = _z(z_s)
    bow = decode_bow(_m2_input(zs, yhat), params["dec2_W"], params["dec2_b"])
    cls = softmax(zs @ params["head2_W"] + params["head2_b"])
    return bow, cls


# ------------------------------------------------------------ objective


def _draw_noise(noise, B, K, K_s):
    if isinstance(noise, np.random.Generator):
        return noise.standard_normal((B, K)), noise.standard_normal((B, K_s))
    eps1, eps2 = noise
    return _rows(eps1).reshape(B, K), _rows(eps2).reshape(B, K_s)


def _ce_and_grad(logits, y):
    p = kernels.softmax_rows(np.ascontiguousarray(logits))
    B = len(y)
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    ce = lse - logits[np.arange(B), y]
    g = p.copy()
    g[np.arange(B), y] -= 1.0
    return p, ce, g


def _mnll(logits, X):
    return kernels.multinomial_nll(np.ascontiguousarray(logits), np.ascontiguousarray(X))


def forward_backward(params, H, X, y, config: CantmConfig, noise, want_grad=True):
    """Loss breakdown for a batch and, optionally, gradients.

    Returns ``(LossBreakdown, grads, dH)`` where ``grads`` covers every CANTM
    parameter and ``dH`` is the gradient w.r.t. the encoder output.
    """
    H = _rows(H)
    X = _rows(X)
    y = np.asarray(y, dtype=np.int64)
    B = H.shape[0]
    K = params["m1_mu_W"].shape[1]
    K_s = params["m2_mu_W"].shape[1]
    D = H.shape[1]
    C = N_CLASSES
    eps1, eps2 = _draw_noise(noise, B, K, K_s)
    w_r1, w_kl1, w_ce1, w_cd, w_r2, w_kl2, w_ce2 = config.weights

    # M1
    mu1 = H @ params["m1_mu_W"] + params["m1_mu_b"]
    lv1, mask1 = clamp_logvar(H @ params["m1_lv_W"] + params["m1_lv_b"])
    s1 = np.exp(0.5 * lv1)
    Z = mu1 + s1 * eps1
    rec1, dL1 = _mnll(Z @ params["dec1_W"] + params["dec1_b"], X)
    kl1 = kernels.gaussian_kl(np.ascontiguousarray(mu1), np.ascontiguousarray(lv1))
    Yh, ce1, dC1_ce = _ce_and_grad(Z @ params["cls_W"] + params["cls_b"], y)
    reccd, dLcd = _mnll(Yh @ params["clsdec_W"] + params["clsdec_b"], X)

    # M2
    y_in = np.eye(C)[y] if config.teacher_forcing else Yh
    In2 = np.concatenate([H, y_in], axis=1)
    mu2 = In2 @ params["m2_mu_W"] + params["m2_mu_b"]
    lv2, mask2 = clamp_logvar(In2 @ params["m2_lv_W"] + params["m2_lv_b"])
    s2 = np.exp(0.5 * lv2)
    Z2 = mu2 + s2 * eps2
    Dec2In = np.concatenate([Z2, Yh], axis=1)
    rec2, dL2 = _mnll(Dec2In @ params["dec2_W"] + params["dec2_b"], X)
    kl2 = kernels.gaussian_kl(np.ascontiguousarray(mu2), np.ascontiguousarray(lv2))
    _, ce2, dC2_ce = _ce_and_grad(Z2 @ params["head2_W"] + params["head2_b"], y)

    per_term = (rec1, kl1, ce1, reccd, rec2, kl2, ce2)
    means = [float(t.mean()) for t in per_term]
    for name, v in zip(LOSS_TERMS, means):
        if not np.isfinite(v):
            raise TrainingDivergedError(f"non-finite loss term {name}")
    total = float(sum(w * m for w, m in zip(config.weights, means)))
    lb = LossBreakdown(*means, total=total)
    if not want_grad:
        return lb, None, None

    g = 1.0 / B
    grads = {}

    # M2 decoders
    dL2 = (g * w_r2) * dL2
    grads["dec2_W"] = Dec2In.T @ dL2
    grads["dec2_b"] = dL2.sum(axis=0)
    dDec2In = dL2 @ params["dec2_W"].T
    dZ2 = dDec2In[:, :K_s]
    dYh = dDec2In[:, K_s:].copy()

    dC2 = (g * w_ce2) * dC2_ce
    grads["head2_W"] = Z2.T @ dC2
    grads["head2_b"] = dC2.sum(axis=0)
    dZ2 = dZ2 + dC2 @ params["head2_W"].T

    # M2 encoder
    dmu2 = dZ2 + (g * w_kl2) * mu2
    dlv2 = dZ2 * eps2 * 0.5 * s2 + (g * w_kl2) * 0.5 * (np.exp(lv2) - 1.0)
    dlv2 = dlv2 * mask2
    grads["m2_mu_W"] = In2.T @ dmu2
    grads["m2_mu_b"] = dmu2.sum(axis=0)
    grads["m2_lv_W"] = In2.T @ dlv2
    grads["m2_lv_b"] = dlv2.sum(axis=0)
    dIn2 = dmu2 @ params["m2_mu_W"].T + dlv2 @ params["m2_lv_W"].T
    dH = dIn2[:, :D].copy()
    if not config.teacher_forcing:
        dYh += dIn2[:, D:]

    # classifier decoder
    dLcd = (g * w_cd) * dLcd
    grads["clsdec_W"] = Yh.T @ dLcd
    grads["clsdec_b"] = dLcd.sum(axis=0)
    dYh += dLcd @ params["clsdec_W"].T

    # M1 classifier: cross-entropy plus everything flowing back through yhat
    dC1 = (g * w_ce1) * dC1_ce + Yh * (dYh - (Yh * dYh).sum(axis=1, keepdims=True))
    grads["cls_W"] = Z.T @ dC1
    grads["cls_b"] = dC1.sum(axis=0)
    dZ = dC1 @ params["cls_W"].T

    dL1 = (g * w_r1) * dL1
    grads["dec1_W"] = Z.T @ dL1
    grads["dec1_b"] = dL1.sum(axis=0)
    dZ += dL1 @ params["dec1_W"].T

    # M1 encoder
    dmu1 = dZ + (g * w_kl1) * mu1
    dlv1 = (dZ * eps1 * 0.5 * s1 + (g * w_kl1) * 0.5 * (np.exp(lv1) - 1.0)) * mask1
    grads["m1_mu_W"] = H.T @ dmu1
    grads["m1_mu_b"] = dmu1.sum(axis=0)
    grads["m1_lv_W"] = H.T @ dlv1
    grads["m1_lv_b"] = dlv1.sum(axis=0)
    dH += dmu1 @ params["m1_mu_W"].T + dlv1 @ params["m1_lv_W"].T
    return lb, grads, dH


def loss(batch, params, config: CantmConfig, noise) -> LossBreakdown:
    """Loss breakdown for ``batch = (X_bow, H, y)`` with the given noise source.

    ``noise`` is a numpy Generator or an explicit ``(eps_z, eps_zs)`` pair.
    """
    X, H, y = batch
    y = np.asarray([label_index(v) if isinstance(v, str) else v for v in y])
    if len(y) != _rows(X).shape[0] or len(y) != _rows(_as_h(H)).shape[0]:
        raise ValueError("batch components have different lengths")
    return forward_backward(params, _as_h(H), X, y, config, noise, want_grad=False)[0]


# ------------------------------------------------------------ model


@dataclass
class Features:
    ids: list
    tokens: list
    bow: np.ndarray
    enc_input: object


class CantmModel:
    """A trained (or freshly initialised) CANTM with its vocabulary and encoder."""

    kind = "cantm"

    def __init__(self, config: CantmConfig, vocab: Vocabulary, encoder, params: dict):
        self.config = config
        self.vocab = vocab
        self.encoder = encoder
        self.params = params
        self.history: list = []

    # -- featurisation
    def tokens_for(self, doc) -> list:
        return document_tokens(doc.full_text, self.config.truncation)

    def featurize(self, docs, tokens=None) -> Features:
        if tokens is None:
            tokens = [self.tokens_for(d) for d in docs]
        ids = [d.id for d in docs]
        X = bow_matrix(tokens, self.vocab)
        return Features(ids, tokens, X, self.encoder.prepare(ids, tokens, X))

    # -- differentiable pieces
    def batch_loss(self, enc_input, X, y, noise, want_grad=True):
        H, cache = self.encoder.forward(self.params, enc_input)
        lb, grads, dH = forward_backward(self.params, H, X, y, self.config, noise, want_grad)
        if want_grad:
            grads.update(self.encoder.backward(self.params, enc_input, cache, dH))
        return lb, grads

    # -- inference
    def posterior(self, feats: Features):
        H, cache = self.encoder.forward(self.params, feats.enc_input)
        gp1 = m1_encode(H, self.params)
        yhat = classify_m1(gp1.mu, self.params)
        y_in = yhat
        gp2 = m2_encode(H, y_in, self.params)
        return H, cache, gp1, yhat, gp2

    def predict_proba_features(self, feats: Features) -> np.ndarray:
        if len(feats.ids) == 0:
            return np.zeros((0, N_CLASSES))
        return self.posterior(feats)[3]

    def predict_proba(self, docs) -> np.ndarray:
        return self.predict_proba_features(self.featurize(docs))

    def predict_labels(self, docs) -> list:
        return [CLASSES[i] for i in np.argmax(self.predict_proba(docs), axis=1)]

    def predict(self, doc):
        """(label, class probabilities) at the posterior mean; ties go to the lowest index."""
        p = self.predict_proba([doc])[0]
        return CLASSES[int(np.argmax(p))], p

    @property
    def dims(self) -> dict:
        return {"D_h": self.encoder.dim, "K": self.config.K, "K_s": self.config.K_s, "V": len(self.vocab)}

    def expected_shapes(self) -> dict:
        d = self.dims
        shapes = param_shapes(d["D_h"], d["K"], d["K_s"], d["V"])
        shapes.update(self.encoder.param_shapes())
        return shapes


def build_model(docs, encoder_spec: EncoderSpec, config: CantmConfig, external=None,
                tokens=None) -> CantmModel:
    """Vocabulary, encoder and freshly initialised parameters for ``docs``."""
    if tokens is None:
        tokens = [document_tokens(d.full_text, config.truncation) for d in docs]
    vocab = build_vocab(tokens, min_df=config.min_df, max_vocab=config.max_vocab)
    encoder = make_encoder(encoder_spec, len(vocab), tokens, min_df=1,
                           max_vocab=config.max_vocab, external=external)
    rng = np.random.default_rng(config.seed)
    params = init_params(rng, encoder.dim, config.K, config.K_s, len(vocab))
    params.update(encoder.init_params(rng))
    return CantmModel(config, vocab, encoder, params)


def _macro_f1(gold, pred) -> float:
    from .evaluation import macro_f1_indices

    return macro_f1_indices(gold, pred)


def train(docs, encoder_spec: EncoderSpec | None = None, config: CantmConfig | None = None,
          external=None) -> CantmModel:
    """Fit CANTM by minibatch gradient descent on the joint objective.

    A stratified ``dev_fraction`` of ``docs`` is held out; after every epoch
    dev macro-F1 is measured and the parameters of the best epoch (latest on
    ties, i.e. the most trained among equals) are returned. Decoder biases
    start at the log background word frequencies of the training part.
    Deterministic for a fixed ``config.seed``.
    """
    from .corpus import stratified_holdout

    encoder_spec = encoder_spec or EncoderSpec()
    config = config or CantmConfig()
    if any(d.label is None for d in docs):
        raise ValueError("training documents must be labeled")
    if config.dev_fraction > 0:
        train_docs, dev_docs = stratified_holdout(docs, config.dev_fraction, config.seed)
    else:
        train_docs, dev_docs = list(docs), []
    tokens = [document_tokens(d.full_text, config.truncation) for d in docs]
    model = build_model(docs, encoder_spec, config, external=external, tokens=tokens)
    if config.epochs == 0:
        return model

    tok_by_id = {d.id: t for d, t in zip(docs, tokens)}
    tr = model.featurize(train_docs, [tok_by_id[d.id] for d in train_docs])
    y_tr = np.array([label_index(d.label) for d in train_docs])
    dev = model.featurize(dev_docs, [tok_by_id[d.id] for d in dev_docs]) if dev_docs else None
    y_dev = np.array([label_index(d.label) for d in dev_docs])

    background = np.log(tr.bow.sum(axis=0) + 1.0)
    background -= np.log(np.exp(background).sum())
    for name in ("dec1_b", "clsdec_b", "dec2_b"):
        model.params[name] = background.copy()

    rng = np.random.default_rng(config.seed + 1)
    opt = make_optimizer(config.optimizer, config.learning_rate)
    best_score, best_params = -1.0, None
    n = len(train_docs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        totals = []
        for bstart in range(0, n, config.batch_size):
            idx = order[bstart : bstart + config.batch_size]
            try:
                lb, grads = model.batch_loss(tr.enc_input.take(idx), tr.bow[idx], y_tr[idx], rng)
            except TrainingDivergedError as e:
                raise TrainingDivergedError(f"epoch {epoch} batch {bstart // config.batch_size}: {e}") from None
            if config.grad_clip > 0:
                clip_grad_norm(grads, config.grad_clip)
            opt.step(model.params, grads)
            totals.append(lb.total)
        record = {"epoch": epoch, "train_loss": float(np.mean(totals))}
        if dev is not None:
            pred = np.argmax(model.predict_proba_features(dev), axis=1)
            score = _macro_f1(y_dev, pred)
            record["dev_macro_f1"] = score
            if score >= best_score:
                best_score, best_params = score, copy_params(model.params)
        model.history.append(record)
        log.debug("epoch %d %s", epoch, record)
    if best_params is not None:
        model.params = best_params
    return model


def predict(doc, model: CantmModel):
    return model.predict(doc)


def with_config(config: CantmConfig, **changes) -> CantmConfig:
    return replace(config, **changes)
