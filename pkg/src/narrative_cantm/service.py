"""HTTP inference service over a single loaded checkpoint.

Endpoints: ``POST /classify``, ``GET /health``, ``GET /model-info``. The model
is read-only after load, so handlers share nothing mutable except a request
counter. Request bodies are parsed by hand so malformed JSON maps to 400
rather than the framework's validation format.
"""

from __future__ import annotations

import json
import logging
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import checkpoint
from .corpus import Document
from .encoders import EncoderError
from .explain import explain
from .labels import CLASSES
from .preprocess import clean, tokenize

log = logging.getLogger(__name__)

MAX_TEXT_BYTES = 100_000
DEFAULT_DOC_ID = "request"


class RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _cap(text: str):
    raw = text.encode("utf-8")
    if len(raw) <= MAX_TEXT_BYTES:
        return text, False
    return raw[:MAX_TEXT_BYTES].decode("utf-8", errors="ignore"), True


def parse_request(body: bytes) -> dict:
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise RequestError(400, f"malformed JSON: {e}") from None
    if not isinstance(payload, dict):
        raise RequestError(400, "request body must be a JSON object")
    text = payload.get("text")
    if not isinstance(text, str):
        raise RequestError(400, "field 'text' must be a string")
    include = payload.get("include_explanation", True)
    if not isinstance(include, bool):
        raise RequestError(400, "field 'include_explanation' must be a boolean")
    doc_id = payload.get("id", DEFAULT_DOC_ID)
    if not isinstance(doc_id, str) or not doc_id:
        raise RequestError(400, "field 'id' must be a non-empty string")
    return {"text": text, "include_explanation": include, "id": doc_id}


class Classifier:
    """Request-level logic, independent of the web framework."""

    def __init__(self, model):
        self.model = model
        self.version = checkpoint.model_version(model)

    def info(self) -> dict:
        m = self.model
        cfg = m.config
        enc = getattr(m, "encoder", None)
        return {
            "kind": m.kind,
            "classes": list(CLASSES),
            "K": getattr(cfg, "K", None),
            "K_s": getattr(cfg, "K_s", None),
            "vocab_size": len(m.vocab) if hasattr(m, "vocab") else None,
            "encoder": enc.spec.kind if enc is not None else "bow",
            "model_version": self.version,
        }

    def classify(self, req: dict) -> dict:
        text, truncated = _cap(req["text"])
        if not clean(text).strip():
            raise RequestError(422, "text is empty after cleaning")
        trunc = getattr(self.model.config, "truncation", None)
        if trunc is not None and len(tokenize(clean(text))) > trunc.budget:
            truncated = True
        doc = Document(req["id"], text)
        try:
            label, probs = self.model.predict(doc)
        except EncoderError as e:
            raise RequestError(422, str(e)) from None
        out = {
            "label": label,
            "probabilities": {c: float(p) for c, p in zip(CLASSES, np.asarray(probs))},
            "explanation": None,
            "truncated": truncated,
            "model_version": self.version,
        }
        if req["include_explanation"] and self.model.kind == "cantm":
            out["explanation"] = explain(doc, self.model).to_dict()
        return out


def create_app(model) -> FastAPI:
    clf = Classifier(model)
    app = FastAPI(title="narrative-cantm", version=clf.version)
    app.state.classifier = clf
    app.state.requests = 0
    lock = threading.Lock()

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        log.exception("unhandled error on %s", request.url.path)
        return JSONResponse({"error": "internal error"}, status_code=500)

    @app.get("/health")
    def health():
        return {"status": "ok", "model_version": clf.version}

    @app.get("/model-info")
    def model_info():
        return clf.info()

    @app.post("/classify")
    async def classify(request: Request):
        with lock:
            app.state.requests += 1
        body = await request.body()
        try:
            return JSONResponse(clf.classify(parse_request(body)))
        except RequestError as e:
            return JSONResponse({"error": e.message}, status_code=e.status)
        except Exception:
            log.exception("classification failed")
            return JSONResponse({"error": "internal error"}, status_code=500)

    return app


def serve(checkpoint_path, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    model = checkpoint.load(checkpoint_path)
    uvicorn.run(create_app(model), host=host, port=port, log_level="info")
