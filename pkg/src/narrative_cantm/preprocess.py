"""Text cleaning, tokenization, truncation, vocabulary and bag-of-words vectors."""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
MENTION_RE = re.compile(r"(?<!\w)@\w+")
HASHTAG_RE = re.compile(r"(?<!\w)#\w+")
WS_RE = re.compile(r"\s+")

# Emoji blocks not fully covered by the So category (modifiers, joiners, tags).
_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F),
    (0x200D, 0x200D),
    (0x20E3, 0x20E3),
    (0xE0020, 0xE007F),
)


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    for lo, hi in _EMOJI_RANGES:
        if lo <= cp <= hi:
            return True
    return unicodedata.category(ch) == "So"


def _clean_once(text: str) -> str:
    text = URL_RE.sub(" ", text)
    text = MENTION_RE.sub(" ", text)
    text = HASHTAG_RE.sub(" ", text)
    text = "".join(ch for ch in text if not _is_emoji(ch))
    return WS_RE.sub(" ", text).strip()


def clean(text: str) -> str:
    """Strip URLs, user mentions, hashtag tokens and emoji; collapse whitespace.

    Casing is preserved. Removing an emoji can glue a new ``#tag`` or URL
    together, so the passes repeat until the string stops changing.
    """
    prev = None
    out = text
    while out != prev:
        prev = out
        out = _clean_once(out)
    return out


def _strip_edges(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start])[0] in "PS":
        start += 1
    while end > start and unicodedata.category(token[end - 1])[0] in "PS":
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and trim punctuation from token edges."""
    tokens = []
    for raw in text.lower().split():
        tok = _strip_edges(raw)
        if tok:
            tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class TruncationStrategy:
    mode: str = "head"
    head_len: int = 400
    tail_len: int = 0

    def __post_init__(self):
        if self.mode not in ("head", "tail", "head_tail"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.head_len < 0 or self.tail_len < 0:
            raise ValueError("truncation lengths must be non-negative")
        if self.mode == "head" and self.tail_len != 0:
            raise ValueError("head truncation takes no tail_len")
        if self.mode == "tail" and self.head_len != 0:
            raise ValueError("tail truncation takes no head_len")
        if self.mode == "head_tail" and (self.head_len == 0 or self.tail_len == 0):
            raise ValueError("head_tail truncation needs both lengths > 0")

    @classmethod
    def head(cls, n: int) -> "TruncationStrategy":
        return cls("head", n, 0)

    @classmethod
    def tail(cls, n: int) -> "TruncationStrategy":
        return cls("tail", 0, n)

    @classmethod
    def head_tail(cls, head_len: int, tail_len: int) -> "TruncationStrategy":
        return cls("head_tail", head_len, tail_len)

    @property
    def budget(self) -> int:
        return self.head_len + self.tail_len

    def to_dict(self) -> dict:
        return {"mode": self.mode, "head_len": self.head_len, "tail_len": self.tail_len}

    @classmethod
    def from_dict(cls, d: dict) -> "TruncationStrategy":
        return cls(d["mode"], int(d["head_len"]), int(d["tail_len"]))


def truncate(tokens: Sequence[str], strategy: TruncationStrategy) -> list[str]:
    tokens = list(tokens)
    if len(tokens) <= strategy.budget:
        return tokens
    if strategy.mode == "head":
        return tokens[: strategy.head_len]
    if strategy.mode == "tail":
        return tokens[len(tokens) - strategy.tail_len :]
    return tokens[: strategy.head_len] + tokens[len(tokens) - strategy.tail_len :]


def load_stopwords() -> frozenset[str]:
    text = resources.files("narrative_cantm").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


DEFAULT_STOPWORDS = load_stopwords()


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {t: i for i, t in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        return token in self.index

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines))


def build_vocab(
    docs: Iterable[Sequence[str]],
    min_df: int = 2,
    max_vocab: int = 10000,
    stopwords: Iterable[str] | None = None,
) -> Vocabulary:
    """Rank tokens by total frequency, keeping those in at least ``min_df`` docs.

    Ties in frequency are broken lexicographically. ``stopwords=None`` means the
    shipped English list; pass an empty set to keep everything.
    """
    if min_df < 1 or max_vocab < 1:
        raise ValueError("min_df and max_vocab must be >= 1")
    stop = DEFAULT_STOPWORDS if stopwords is None else frozenset(stopwords)
    df: Counter = Counter()
    tf: Counter = Counter()
    for doc in docs:
        tf.update(doc)
        df.update(set(doc))
    kept = [t for t, d in df.items() if d >= min_df and t not in stop]
    kept.sort(key=lambda t: (-tf[t], t))
    if not kept:
        raise ValueError("vocabulary is empty after min_df/stopword filtering")
    return Vocabulary(tuple(kept[:max_vocab]))


@dataclass(frozen=True)
class BowVector:
    counts: dict
    size: int

    def total(self) -> int:
        return sum(self.counts.values())

    def dense(self) -> np.ndarray:
        out = np.zeros(self.size)
        for i, c in self.counts.items():
            out[i] = c
        return out


def to_bow(tokens: Sequence[str], vocab: Vocabulary) -> BowVector:
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    counts: dict = {}
    for t in tokens:
        i = vocab.index.get(t)
        if i is not None:
            counts[i] = counts.get(i, 0) + 1
    return BowVector(dict(sorted(counts.items())), len(vocab))


def bow_matrix(token_lists: Sequence[Sequence[str]], vocab: Vocabulary) -> np.ndarray:
    """Dense (n_docs, V) count matrix."""
    out = np.zeros((len(token_lists), len(vocab)))
    for r, toks in enumerate(token_lists):
        for t in toks:
            i = vocab.index.get(t)
            if i is not None:
                out[r, i] += 1.0
    return out


def document_tokens(text: str, truncation: TruncationStrategy | None = None) -> list[str]:
    """Full text path used by every model: clean, tokenize, truncate."""
    toks = tokenize(clean(text))
    if truncation is not None:
        toks = truncate(toks, truncation)
    return toks
