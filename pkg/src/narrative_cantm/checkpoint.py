"""Self-describing ``.npz`` checkpoints for every model family.

Layout: one ``__meta__`` entry holding a JSON document (kind, config,
vocabulary, encoder spec and parameter shapes), every parameter tensor under
``param/<name>``, and for external-feature models the embedding table under
``ext/ids`` and ``ext/vectors``. Loading rebuilds the model skeleton from the
metadata and rejects any tensor whose shape disagrees with it.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from . import baselines, cantm
from .encoders import EmbedAvgEncoder, EncoderSpec, ExternalEncoder, make_encoder
from .preprocess import Vocabulary

FORMAT = "narrative-cantm-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encoder_of(model):
    return getattr(model, "encoder", None)


def _meta(model) -> dict:
    meta = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "shapes": {k: list(v.shape) for k, v in sorted(model.params.items())},
    }
    if hasattr(model, "vocab"):
        meta["vocab"] = list(model.vocab.tokens)
    enc = _encoder_of(model)
    if enc is not None:
        meta["encoder"] = enc.spec.to_dict()
        if isinstance(enc, EmbedAvgEncoder):
            meta["encoder_vocab"] = list(enc.token_vocab.tokens)
    return meta


def model_version(model) -> str:
    """Content hash of metadata and parameters; stable across save/load."""
    h = hashlib.sha256(json.dumps(_meta(model), sort_keys=True).encode("utf-8"))
    for k in sorted(model.params):
        h.update(k.encode("utf-8"))
        h.update(np.ascontiguousarray(model.params[k], dtype=np.float64).tobytes())
    enc = _encoder_of(model)
    if isinstance(enc, ExternalEncoder):
        for k in sorted(enc.table):
            h.update(k.encode("utf-8"))
            h.update(np.ascontiguousarray(enc.table[k], dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def save(model, path) -> Path:
    path = Path(path)
    arrays = {"__meta__": np.array(json.dumps(_meta(model), sort_keys=True))}
    for k, v in model.params.items():
        arrays[f"param/{k}"] = np.asarray(v, dtype=np.float64)
    enc = _encoder_of(model)
    if isinstance(enc, ExternalEncoder):
        ids = sorted(enc.table)
        arrays["ext/ids"] = np.array(ids)
        arrays["ext/vectors"] = np.stack([enc.table[i] for i in ids])
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.write_bytes(buf.getvalue())
    return path


def _external(data, spec: EncoderSpec) -> ExternalEncoder:
    if "ext/ids" not in data:
        raise CheckpointError("checkpoint lacks the external embedding table")
    ids = [str(i) for i in data["ext/ids"]]
    vecs = data["ext/vectors"]
    return ExternalEncoder(spec, {i: vecs[n].copy() for n, i in enumerate(ids)})


def _skeleton(meta, data):
    kind = meta["kind"]
    vocab = Vocabulary(tuple(meta.get("vocab", ())))
    if kind == "cantm":
        config = cantm.CantmConfig.from_dict(meta["config"])
        spec = EncoderSpec.from_dict(meta["encoder"])
        if spec.kind == "external":
            encoder = _external(data, spec)
        elif spec.kind == "embed_avg":
            encoder = EmbedAvgEncoder(spec, Vocabulary(tuple(meta["encoder_vocab"])))
        else:
            encoder = make_encoder(spec, len(vocab))
        return cantm.CantmModel(config, vocab, encoder, {})
    if kind == "bow_lr":
        return baselines.BowLogReg(baselines.LogRegConfig.from_dict(meta["config"]), vocab, {})
    if kind == "scholar":
        return baselines.ScholarModel(baselines.ScholarConfig.from_dict(meta["config"]), vocab, {})
    if kind == "frozen_head":
        spec = EncoderSpec.from_dict(meta["encoder"])
        return baselines.FrozenHead(baselines.HeadConfig.from_dict(meta["config"]), _external(data, spec), {})
    raise CheckpointError(f"unknown model kind {kind!r}")


def load(path):
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"{path}: not a readable checkpoint ({e})") from None
    with data:
        if "__meta__" not in data:
            raise CheckpointError(f"{path}: missing metadata")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unknown format {meta.get('format')!r}")
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
        model = _skeleton(meta, data)
        params = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}

    expected = {k: tuple(v) for k, v in model.expected_shapes().items()}
    recorded = {k: tuple(v) for k, v in meta["shapes"].items()}
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointError(f"{path}: parameter set mismatch (missing {missing}, unexpected {extra})")
    for k, v in params.items():
        if v.shape != expected[k] or recorded.get(k) != expected[k]:
            raise CheckpointError(
                f"{path}: shape mismatch for {k}: stored {v.shape}, header {recorded.get(k)}, "
                f"expected {expected[k]}"
            )
        if not np.all(np.isfinite(v)):
            raise CheckpointError(f"{path}: non-finite values in {k}")
    model.params = params
    return model
