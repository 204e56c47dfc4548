import json
from pathlib import Path

import numpy as np
import pytest
from jsonschema import Draft202012Validator

from fastapi.testclient import TestClient

from narrative_cantm import checkpoint, service
from narrative_cantm.labels import CLASSES
from narrative_cantm.models import ModelSpec

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "api_schema.json").read_text())


def validate(payload, name):
    sub = {"$ref": f"#/$defs/{name}", "$defs": SCHEMA["$defs"]}
    Draft202012Validator(sub).validate(payload)


@pytest.fixture(scope="module")
def client(small_cantm):
    return TestClient(service.create_app(small_cantm))


@pytest.fixture(scope="module")
def attention_client(attention_cantm):
    return TestClient(service.create_app(attention_cantm))


def post(client, payload):
    return client.post("/classify", content=json.dumps(payload).encode())


def test_schema_is_valid():
    Draft202012Validator.check_schema(SCHEMA)


def test_health(client, small_cantm):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "model_version": checkpoint.model_version(small_cantm)}
    validate(r.json(), "HealthResponse")


def test_model_info(client, small_cantm):
    r = client.get("/model-info").json()
    validate(r, "ModelInfoResponse")
    assert r["classes"] == list(CLASSES)
    assert (r["K"], r["K_s"], r["vocab_size"], r["encoder"]) == (10, 5, len(small_cantm.vocab), "bow_mlp")


@pytest.mark.parametrize("text", ["vaccines are great", "pekw01 pekw02 noise001", "ünïcödé 💉 text"])
def test_classify(client, text):
    r = post(client, {"text": text})
    assert r.status_code == 200
    body = r.json()
    validate(body, "ClassifyResponse")
    probs = body["probabilities"]
    assert list(probs) == list(CLASSES)
    assert abs(sum(probs.values()) - 1.0) <= 1e-6
    assert body["label"] == max(CLASSES, key=lambda c: (probs[c], -CLASSES.index(c)))
    assert body["explanation"]["attention"] is None
    assert body["truncated"] is False


def test_explanation_optional(client):
    body = post(client, {"text": "some text here", "include_explanation": False}).json()
    assert body["explanation"] is None
    validate(body, "ClassifyResponse")


def test_attention_in_response(attention_client):
    body = post(attention_client, {"text": "pekw03 noise010 sen words"}).json()
    validate(body, "ClassifyResponse")
    att = body["explanation"]["attention"]
    assert abs(sum(w for _, w in att) - 1.0) < 1e-9


def test_deterministic(client):
    a = post(client, {"text": "the same words twice"})
    b = post(client, {"text": "the same words twice"})
    assert a.content == b.content


def test_restart_reproduces(small_cantm, tmp_path):
    path = checkpoint.save(small_cantm, tmp_path / "m.npz")
    a = post(TestClient(service.create_app(checkpoint.load(path))), {"text": "dpakw01 hello"})
    b = post(TestClient(service.create_app(checkpoint.load(path))), {"text": "dpakw01 hello"})
    assert a.content == b.content


@pytest.mark.parametrize("body", [b"{not json", b"[1, 2]", b'{"text": 5}', b'{"text": "x", "include_explanation": "yes"}',
                                  b'{}', b"\xff\xfe"])
def test_malformed(client, body):
    r = client.post("/classify", content=body)
    assert r.status_code == 400
    validate(r.json(), "ErrorResponse")


@pytest.mark.parametrize("text", ["", "   ", "https://example.com"])
def test_empty_after_cleaning(client, text):
    r = post(client, {"text": text})
    assert r.status_code == 422
    validate(r.json(), "ErrorResponse")


def test_external_missing_id(small_corpus):
    from narrative_cantm.encoders import EncoderSpec, ExternalEncoder

    docs = small_corpus.docs[::5]
    ext = ExternalEncoder(EncoderSpec("external", 3), {d.id: np.ones(3) * i for i, d in enumerate(docs)})
    m = ModelSpec("cantm", {"K": 3, "K_s": 2, "epochs": 1}, EncoderSpec("external", 3), ext).fit(docs)
    c = TestClient(service.create_app(m))
    assert post(c, {"text": "anything", "id": docs[0].id}).status_code == 200
    r = post(c, {"text": "anything", "id": "unknown-id"})
    assert r.status_code == 422 and "unknown-id" in r.json()["error"]


def test_internal_error_hides_details(small_cantm, monkeypatch):
    c = TestClient(service.create_app(small_cantm))

    def boom(doc):
        raise RuntimeError("secret internal detail")

    monkeypatch.setattr(small_cantm, "predict", boom)
    r = post(c, {"text": "hello world"})
    assert r.status_code == 500
    assert r.json() == {"error": "internal error"}
    assert "secret" not in r.text


def test_byte_cap_sets_truncated(client):
    body = post(client, {"text": "word " * 30_000, "include_explanation": False}).json()
    assert body["truncated"] is True


def test_token_budget_sets_truncated(client, small_cantm):
    n = small_cantm.config.truncation.head_len + small_cantm.config.truncation.tail_len + 1
    body = post(client, {"text": " ".join(["pekw01"] * n), "include_explanation": False}).json()
    assert body["truncated"] is True


def test_baseline_model_has_no_explanation(small_corpus):
    m = ModelSpec("bow_lr").fit(small_corpus.docs)
    c = TestClient(service.create_app(m))
    body = post(c, {"text": "pekw01 pekw02"}).json()
    validate(body, "ClassifyResponse")
    assert body["explanation"] is None and body["label"] == "PE"
    info = c.get("/model-info").json()
    validate(info, "ModelInfoResponse")
    assert info["kind"] == "bow_lr" and info["K"] is None


def test_parse_request_defaults():
    assert service.parse_request(b'{"text": "a"}') == {"text": "a", "include_explanation": True, "id": "request"}
