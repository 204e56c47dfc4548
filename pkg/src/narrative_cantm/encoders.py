"""Text encoders producing the dense document representation ``h``.

Three kinds share one interface:

* ``bow_mlp``   - one tanh layer over the length-normalised bag of words
* ``embed_avg`` - tanh of an attention-weighted mean of learned token embeddings
* ``external``  - fixed vectors looked up by document id (precomputed by an
  outside contextual encoder)

Encoder objects hold configuration and lookup tables only; trainable weights
live in the owning model's parameter dict under ``enc_*`` keys so a single
optimizer updates everything.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .nn import glorot
from .preprocess import Vocabulary, build_vocab

UNK = "<unk>"


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderSpec:
    kind: str = "bow_mlp"
    dim: int = 500
    attention: str = "learned"  # embed_avg only: "learned" or "uniform"
    embeddings_path: Optional[str] = None  # external only

    def __post_init__(self):
        if self.kind not in ("bow_mlp", "embed_avg", "external"):
            raise EncoderError(f"unknown encoder kind {self.kind!r}")
        if self.dim < 1:
            raise EncoderError("encoder dim must be >= 1")
        if self.attention not in ("learned", "uniform"):
            raise EncoderError(f"unknown attention mode {self.attention!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "attention": self.attention,
                "embeddings_path": self.embeddings_path}

    @classmethod
    def from_dict(cls, d) -> "EncoderSpec":
        return cls(d["kind"], int(d["dim"]), d.get("attention", "learned"), d.get("embeddings_path"))


@dataclass
class EncodedText:
    h: np.ndarray
    attention: Optional[list] = None  # [(token, weight), ...]


@dataclass
class EncoderInput:
    """Batched encoder input; which fields are set depends on the encoder kind."""

    bow: Optional[np.ndarray] = None
    token_ids: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None
    tokens: Optional[list] = None
    features: Optional[np.ndarray] = None

    def take(self, idx) -> "EncoderInput":
        idx = np.asarray(idx)
        if self.features is not None:
            return EncoderInput(features=self.features[idx])
        if self.bow is not None and self.token_ids is None:
            return EncoderInput(bow=self.bow[idx])
        seqs = [self.token_ids[self.offsets[i] : self.offsets[i + 1]] for i in idx]
        toks = [self.tokens[i] for i in idx] if self.tokens is not None else None
        return _pack_ids(seqs, toks)


def _pack_ids(seqs, tokens=None) -> EncoderInput:
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(s) for s in seqs])
    flat = np.concatenate(seqs).astype(np.int64) if offsets[-1] else np.zeros(0, dtype=np.int64)
    return EncoderInput(token_ids=flat, offsets=offsets, tokens=tokens)


class BowMLPEncoder:
    kind = "bow_mlp"
    has_attention = False

    def __init__(self, spec: EncoderSpec, vocab_size: int):
        self.spec = spec
        self.dim = spec.dim
        self.vocab_size = vocab_size

    def param_shapes(self) -> dict:
        return {"enc_W": (self.vocab_size, self.dim), "enc_b": (self.dim,)}

    def init_params(self, rng) -> dict:
        return {"enc_W": glorot(rng, self.vocab_size, self.dim), "enc_b": np.zeros(self.dim)}

    def prepare(self, ids, token_lists, bow) -> EncoderInput:
        return EncoderInput(bow=np.asarray(bow, dtype=np.float64))

    def forward(self, params, inp: EncoderInput):
        x = inp.bow
        xn = x / np.maximum(x.sum(axis=1, keepdims=True), 1.0)
        h = np.tanh(xn @ params["enc_W"] + params["enc_b"])
        return h, (xn, h)

    def backward(self, params, inp, cache, dh) -> dict:
        xn, h = cache
        da = dh * (1.0 - h * h)
        return {"enc_W": xn.T @ da, "enc_b": da.sum(axis=0)}

    def attention(self, params, inp, cache):
        return None


class EmbedAvgEncoder:
    kind = "embed_avg"
    has_attention = True

    def __init__(self, spec: EncoderSpec, token_vocab: Vocabulary):
        if not token_vocab.tokens or token_vocab.tokens[0] != UNK:
            raise EncoderError("embed_avg vocabulary must start with the <unk> token")
        self.spec = spec
        self.dim = spec.dim
        self.token_vocab = token_vocab

    @staticmethod
    def build_token_vocab(token_lists, min_df=1, max_vocab=10000) -> Vocabulary:
        try:
            v = build_vocab(token_lists, min_df=min_df, max_vocab=max_vocab, stopwords=())
            toks = v.tokens
        except ValueError:
            toks = ()
        return Vocabulary((UNK,) + tuple(t for t in toks if t != UNK))

    def param_shapes(self) -> dict:
        shapes = {"enc_E": (len(self.token_vocab), self.dim)}
        if self.spec.attention == "learned":
            shapes["enc_s"] = (self.dim,)
        return shapes

    def init_params(self, rng) -> dict:
        p = {"enc_E": rng.normal(0.0, 0.5, size=(len(self.token_vocab), self.dim))}
        if self.spec.attention == "learned":
            p["enc_s"] = rng.normal(0.0, 0.1, size=self.dim)
        return p

    def prepare(self, ids, token_lists, bow) -> EncoderInput:
        index = self.token_vocab.index
        seqs = [np.array([index.get(t, 0) for t in toks], dtype=np.int64) for toks in token_lists]
        return _pack_ids(seqs, [list(t) for t in token_lists])

    def forward(self, params, inp: EncoderInput):
        rows = np.ascontiguousarray(params["enc_E"][inp.token_ids])
        if "enc_s" in params:
            scores = rows @ params["enc_s"]
        else:
            scores = np.zeros(len(inp.token_ids))
        weights, pooled = kernels.segment_attention(rows, np.ascontiguousarray(scores), inp.offsets)
        h = np.tanh(pooled)
        return h, (rows, weights, h)

    def backward(self, params, inp, cache, dh) -> dict:
        rows, weights, h = cache
        d_pooled = np.ascontiguousarray(dh * (1.0 - h * h))
        d_rows, d_scores = kernels.segment_attention_backward(rows, weights, inp.offsets, d_pooled)
        grads = {}
        if "enc_s" in params:
            grads["enc_s"] = rows.T @ d_scores
            d_rows = d_rows + d_scores[:, None] * params["enc_s"][None, :]
        dE = np.zeros_like(params["enc_E"])
        np.add.at(dE, inp.token_ids, d_rows)
        grads["enc_E"] = dE
        return grads

    def attention(self, params, inp, cache):
        _, weights, _ = cache
        out = []
        for b in range(len(inp.offsets) - 1):
            lo, hi = inp.offsets[b], inp.offsets[b + 1]
            toks = inp.tokens[b] if inp.tokens is not None else [
                self.token_vocab.tokens[i] for i in inp.token_ids[lo:hi]
            ]
            out.append([(t, float(w)) for t, w in zip(toks, weights[lo:hi])])
        return out


class ExternalEncoder:
    kind = "external"
    has_attention = False

    def __init__(self, spec: EncoderSpec, table: dict):
        if not table:
            raise EncoderError("external embedding table is empty")
        self.table = table
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise EncoderError(f"inconsistent embedding dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.spec = EncoderSpec("external", self.dim, spec.attention, spec.embeddings_path)

    def param_shapes(self) -> dict:
        return {}

    def init_params(self, rng) -> dict:
        return {}

    def lookup(self, doc_id) -> np.ndarray:
        try:
            return self.table[doc_id]
        except KeyError:
            raise EncoderError(f"no external embedding for document id {doc_id!r}") from None

    def prepare(self, ids, token_lists, bow) -> EncoderInput:
        if len(ids) == 0:
            return EncoderInput(features=np.zeros((0, self.dim)))
        return EncoderInput(features=np.stack([self.lookup(i) for i in ids]))

    def forward(self, params, inp: EncoderInput):
        return inp.features, None

    def backward(self, params, inp, cache, dh) -> dict:
        return {}

    def attention(self, params, inp, cache):
        return None


def load_external_embeddings(path) -> ExternalEncoder:
    """Parse ``id dim`` header then ``id v1 ... vD`` rows (whitespace separated)."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise EncoderError(f"{path}: empty embeddings file")
    header = lines[0].split()
    if len(header) != 2:
        raise EncoderError(f"{path}: header must have two fields, got {lines[0]!r}")
    try:
        dim = int(header[1])
    except ValueError:
        raise EncoderError(f"{path}: header dimension {header[1]!r} is not an integer") from None
    table = {}
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split()
        if len(parts) - 1 != dim:
            raise EncoderError(f"{path} line {lineno}: expected {dim} values, got {len(parts) - 1}")
        vec = np.array([float(v) for v in parts[1:]])
        if not np.all(np.isfinite(vec)):
            raise EncoderError(f"{path} line {lineno}: non-finite value")
        table[parts[0]] = vec
    if not table:
        raise EncoderError(f"{path}: no embedding rows")
    return ExternalEncoder(EncoderSpec("external", dim, embeddings_path=str(path)), table)


def save_external_embeddings(table: dict, path) -> None:
    dim = len(next(iter(table.values())))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"id {dim}\n")
        for k, v in table.items():
            fh.write(k + " " + " ".join(repr(float(x)) for x in v) + "\n")


def make_encoder(spec: EncoderSpec, bow_vocab_size: int, token_lists: Sequence = (),
                 min_df: int = 1, max_vocab: int = 10000, external=None):
    if spec.kind == "bow_mlp":
        return BowMLPEncoder(spec, bow_vocab_size)
    if spec.kind == "embed_avg":
        return EmbedAvgEncoder(spec, EmbedAvgEncoder.build_token_vocab(token_lists, min_df, max_vocab))
    if external is None:
        if spec.embeddings_path is None:
            raise EncoderError("external encoder needs an embeddings file")
        external = load_external_embeddings(spec.embeddings_path)
    return external


def encode(encoder, params, doc_id, tokens, bow_counts) -> EncodedText:
    """Encode one document; deterministic for fixed parameters."""
    inp = encoder.prepare([doc_id], [list(tokens)], np.atleast_2d(bow_counts))
    h, cache = encoder.forward(params, inp)
    att = encoder.attention(params, inp, cache)
    return EncodedText(h[0].copy(), att[0] if att is not None else None)
