"""Read explanations out of a trained CANTM.

Four views are available: token attention (encoders that have it), the M1
topic vector z, the M2 topic vector z_s, and the words the class decoder
reconstructs from a predicted label. Topic rankings use raw decoder weights;
softmax is monotone so the order is the same.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .labels import CLASSES, label_index

DEFAULT_N = 10
TOP_TOPICS = 3


@dataclass(frozen=True)
class TopicWordList:
    topic: object  # integer topic id, or class name
    words: tuple  # ((word, score), ...) with non-increasing scores

    def to_dict(self) -> dict:
        return {"topic": self.topic, "words": [[w, s] for w, s in self.words]}

    @property
    def tokens(self) -> list:
        return [w for w, _ in self.words]


def rank_row(weights, vocab_tokens, n) -> tuple:
    """Top ``n`` (word, weight) pairs by weight, ties broken alphabetically."""
    w = np.asarray(weights, dtype=np.float64)
    order = sorted(range(len(w)), key=lambda i: (-w[i], vocab_tokens[i]))
    return tuple((vocab_tokens[i], float(w[i])) for i in order[: max(0, n)])


def _tokens(model):
    return model.vocab.tokens


def topic_words(model, stage: str, topic: int, n: int = DEFAULT_N) -> TopicWordList:
    if stage == "m1":
        W, limit = model.params["dec1_W"], model.config.K
    elif stage == "m2":
        W, limit = model.params["dec2_W"], model.config.K_s
    else:
        raise ValueError(f"stage must be 'm1' or 'm2', got {stage!r}")
    if not 0 <= topic < limit:
        raise IndexError(f"{stage} topic {topic} out of range [0, {limit})")
    return TopicWordList(int(topic), rank_row(W[topic], _tokens(model), n))


def class_associated_words(model, cls, n: int = DEFAULT_N, source: str = "clsdec") -> TopicWordList:
    """Words most strongly reconstructed from class ``cls`` alone.

    ``source="clsdec"`` reads the class decoder; ``source="m2"`` reads the
    label block of the M2 decoder instead.
    """
    c = label_index(cls) if isinstance(cls, str) else int(cls)
    if not 0 <= c < len(CLASSES):
        raise IndexError(f"class index {c} out of range")
    if source == "clsdec":
        row = model.params["clsdec_W"][c]
    elif source == "m2":
        row = model.params["dec2_W"][model.config.K_s + c]
    else:
        raise ValueError(f"unknown source {source!r}")
    return TopicWordList(CLASSES[c], rank_row(row, _tokens(model), n))


def _top_topics(activation, k) -> list:
    a = np.abs(activation)
    return sorted(range(len(a)), key=lambda i: (-a[i], i))[:k]


@dataclass(frozen=True)
class Explanation:
    label: str
    probabilities: tuple
    attention: Optional[tuple]
    z_weights: tuple
    z_s_weights: tuple
    top_topics_m1: tuple
    top_topics_m2: tuple
    class_words: TopicWordList

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "probabilities": dict(zip(CLASSES, self.probabilities)),
            "attention": None if self.attention is None else [[t, w] for t, w in self.attention],
            "z_weights": list(self.z_weights),
            "z_s_weights": list(self.z_s_weights),
            "top_topics_m1": [t.to_dict() for t in self.top_topics_m1],
            "top_topics_m2": [t.to_dict() for t in self.top_topics_m2],
            "class_words": self.class_words.to_dict(),
        }

    def text_report(self, n_words: int = 8) -> str:
        lines = [f"label: {self.label}"]
        lines.append("probabilities: " + ", ".join(f"{c}={p:.3f}" for c, p in zip(CLASSES, self.probabilities)))
        if self.attention is not None:
            ranked = sorted(self.attention, key=lambda tw: -tw[1])[:n_words]
            lines.append("attention: " + ", ".join(f"{t}({w:.3f})" for t, w in ranked))
        for name, topics, weights in (("z", self.top_topics_m1, self.z_weights),
                                      ("z_s", self.top_topics_m2, self.z_s_weights)):
            for t in topics:
                words = " ".join(t.tokens[:n_words])
                lines.append(f"{name} topic {t.topic} ({weights[t.topic]:+.3f}): {words}")
        lines.append(f"class words [{self.class_words.topic}]: " + " ".join(self.class_words.tokens[:n_words]))
        return "\n".join(lines) + "\n"


def explain(doc, model, n: int = DEFAULT_N, class_source: str = "clsdec") -> Explanation:
    feats = model.featurize([doc])
    _, cache, gp1, yhat, gp2 = model.posterior(feats)
    probs = yhat[0]
    label = CLASSES[int(np.argmax(probs))]
    att = model.encoder.attention(model.params, feats.enc_input, cache)
    attention = tuple(att[0]) if att is not None else None
    mu1, mu2 = gp1.mu[0], gp2.mu[0]
    return Explanation(
        label=label,
        probabilities=tuple(float(p) for p in probs),
        attention=attention,
        z_weights=tuple(float(v) for v in mu1),
        z_s_weights=tuple(float(v) for v in mu2),
        top_topics_m1=tuple(topic_words(model, "m1", t, n) for t in _top_topics(mu1, TOP_TOPICS)),
        top_topics_m2=tuple(topic_words(model, "m2", t, n) for t in _top_topics(mu2, TOP_TOPICS)),
        class_words=class_associated_words(model, label, n, class_source),
    )
