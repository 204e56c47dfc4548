"""Synthetic labeled corpora with known class-specific vocabularies.

Each class owns a block of keywords; every token of a document is drawn from
its class block with probability ``signal`` and otherwise from a pool of
shared noise words. Because the generating words are known, the corpus is an
oracle for classification accuracy and for topic-word recovery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .corpus import Document
from .labels import CLASSES


@dataclass
class SyntheticCorpus:
    docs: list
    keywords: dict  # class -> list of generating words
    noise_words: list


def class_keywords(words_per_class: int) -> dict:
    return {c: [f"{c.lower()}kw{j:02d}" for j in range(words_per_class)] for c in CLASSES}


def make_corpus(
    class_counts: Optional[Mapping] = None,
    vocab_size: int = 200,
    words_per_class: int = 20,
    signal: float = 0.7,
    doc_len: tuple = (15, 30),
    seed: int = 0,
    origin: str = "fd",
    id_prefix: str = "syn",
    shared_keywords: Optional[Mapping] = None,
) -> SyntheticCorpus:
    """Generate documents in class order.

    ``class_counts`` defaults to 100 documents per class (700 total). The
    vocabulary holds ``words_per_class`` keywords per class and fills the
    remaining ``vocab_size`` slots with noise words. ``shared_keywords`` maps
    a class to another class whose keyword block it borrows instead of its own,
    which makes two classes deliberately confusable.
    """
    if class_counts is None:
        class_counts = {c: 100 for c in CLASSES}
    n_noise = vocab_size - words_per_class * len(CLASSES)
    if n_noise < 1:
        raise ValueError("vocab_size too small for the keyword blocks")
    keywords = class_keywords(words_per_class)
    noise = [f"noise{j:03d}" for j in range(n_noise)]
    shared = dict(shared_keywords or {})
    rng = np.random.default_rng(seed)
    docs = []
    for c in CLASSES:
        block = keywords[shared.get(c, c)]
        for _ in range(int(class_counts.get(c, 0))):
            n = int(rng.integers(doc_len[0], doc_len[1] + 1))
            from_class = rng.random(n) < signal
            words = [
                block[rng.integers(len(block))] if fc else noise[rng.integers(n_noise)]
                for fc in from_class
            ]
            docs.append(Document(f"{id_prefix}-{len(docs):05d}", " ".join(words), "other", c, origin))
    return SyntheticCorpus(docs, keywords, noise)


def replay_counts(counts: Mapping, origin: str = "fd", id_prefix: str = "doc", seed: int = 0) -> list:
    """Short placeholder documents reproducing a class-count table."""
    corpus = make_corpus(counts, vocab_size=200, words_per_class=20, doc_len=(3, 6),
                         seed=seed, origin=origin, id_prefix=id_prefix)
    return corpus.docs
