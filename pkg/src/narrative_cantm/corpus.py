"""Labeled narrative documents: loading, deduplication, statistics and folds."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .labels import CLASSES, UnknownLabelError, normalize_label
from .preprocess import clean

log = logging.getLogger(__name__)

PLATFORMS = ("twitter", "facebook", "instagram", "news", "other")
ORIGINS = ("fd", "augmented", "unlabeled")
FIELDS = ("id", "text", "platform", "label", "origin", "alt_text")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    platform: str = "other"
    label: Optional[str] = None
    origin: str = "unlabeled"
    alt_text: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise DatasetError("document id must be non-empty")
        if self.platform not in PLATFORMS:
            raise DatasetError(f"unknown platform {self.platform!r}")
        if self.origin not in ORIGINS:
            raise DatasetError(f"unknown origin {self.origin!r}")
        if self.label is not None and self.label not in CLASSES:
            raise UnknownLabelError(f"unknown label {self.label!r}")
        if not self.full_text.strip():
            raise DatasetError(f"document {self.id!r} has no text or alt text")

    @property
    def full_text(self) -> str:
        """Post text with the image alt text appended."""
        if self.alt_text:
            return f"{self.text} {self.alt_text}" if self.text else self.alt_text
        return self.text

    def to_json(self) -> dict:
        return asdict(self)


def _row_to_document(row: dict, where: str) -> Optional[Document]:
    def opt(key):
        v = row.get(key)
        return None if v is None or v == "" else str(v)

    doc_id = opt("id")
    if doc_id is None:
        raise DatasetError(f"{where}: missing id")
    try:
        label = normalize_label(opt("label"))
    except UnknownLabelError:
        raise UnknownLabelError(f"{where}: unknown label {row.get('label')!r}") from None
    text = opt("text") or ""
    alt = opt("alt_text")
    if not text.strip() and not (alt or "").strip():
        return None
    try:
        return Document(
            id=doc_id,
            text=text,
            platform=(opt("platform") or "other").lower(),
            label=label,
            origin=(opt("origin") or ("unlabeled" if label is None else "fd")).lower(),
            alt_text=alt,
        )
    except UnknownLabelError:
        raise
    except DatasetError as e:
        raise DatasetError(f"{where}: {e}") from None


def load_dataset(path, fmt: str | None = None) -> list[Document]:
    """Read documents in file order from JSONL (canonical) or CSV.

    Rows whose text and alt text are both empty (video-only posts) are skipped
    and counted in a warning. An unknown label is a hard error naming the row.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt not in ("jsonl", "csv"):
        raise DatasetError(f"unsupported format {fmt!r}")
    docs: list[Document] = []
    skipped = 0
    malformed: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            rows = []
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    malformed.append(f"line {lineno}: {e.msg}")
                    continue
                if not isinstance(obj, dict):
                    malformed.append(f"line {lineno}: not a JSON object")
                    continue
                rows.append((f"line {lineno}", obj))
        else:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "id" not in reader.fieldnames or "text" not in reader.fieldnames:
                raise DatasetError(f"{path}: CSV header must include id and text columns")
            # header is line 1
            rows = [(f"line {n}", row) for n, row in enumerate(reader, 2)]
    for where, row in rows:
        try:
            doc = _row_to_document(row, where)
        except UnknownLabelError:
            raise
        except DatasetError as e:
            malformed.append(str(e))
            continue
        if doc is None:
            skipped += 1
            continue
        docs.append(doc)
    if malformed:
        raise DatasetError(f"{path}: malformed rows:\n  " + "\n  ".join(malformed))
    if skipped:
        log.warning("%s: skipped %d rows with no text", path, skipped)
    return docs


def save_jsonl(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def duplicate_key(doc: Document) -> str:
    return clean(doc.full_text).casefold()


def deduplicate(docs: Sequence[Document], existing: Iterable[Document] = ()) -> list[Document]:
    """Keep the first document for each cleaned, case-folded text.

    Documents duplicating anything in ``existing`` are dropped as well.
    """
    seen = {duplicate_key(d) for d in existing}
    out = []
    for d in docs:
        key = duplicate_key(d)
        if key in seen:
            continue
        seen.add(key)
        out.append(d)
    removed = len(docs) - len(out)
    if removed:
        log.info("removed %d duplicate documents", removed)
    return out


@dataclass(frozen=True)
class ClassDistribution:
    counts: dict
    total: int

    @property
    def proportions(self) -> dict:
        return {c: self.counts[c] / self.total for c in CLASSES}

    def percent_row(self) -> dict:
        """Whole-number percentages, rounded half up, as printed in tables."""
        return {c: int(np.floor(100 * self.counts[c] / self.total + 0.5)) for c in CLASSES}

    def format_row(self, name: str = "") -> str:
        pct = self.percent_row()
        cells = [f"{self.counts[c]}({pct[c]}%)" for c in CLASSES]
        return " | ".join([name, *cells, str(self.total)])


def class_distribution(docs: Iterable[Document]) -> ClassDistribution:
    counts = {c: 0 for c in CLASSES}
    for d in docs:
        if d.label is None:
            raise DatasetError(f"document {d.id!r} is unlabeled")
        counts[d.label] += 1
    total = sum(counts.values())
    if total == 0:
        raise DatasetError("no documents")
    return ClassDistribution(counts, total)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: dict

    def fold_ids(self, fold: int) -> list:
        return [i for i, f in self.assignment.items() if f == fold]

    def split(self, docs: Sequence[Document], fold: int):
        """(train, test) document lists for one fold, in input order."""
        train = [d for d in docs if self.assignment[d.id] != fold]
        test = [d for d in docs if self.assignment[d.id] == fold]
        return train, test


def stratified_kfold(docs: Sequence[Document], k: int, seed: int) -> FoldAssignment:
    """Assign each labeled document to one of ``k`` folds, stratified by class.

    Each class's members are shuffled and dealt round-robin. The dealing
    position carries over from one class to the next, so per-class fold
    counts differ by at most one and so do overall fold sizes.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise DatasetError("document ids must be unique for fold assignment")
    rng = np.random.default_rng(seed)
    by_class: dict = {c: [] for c in CLASSES}
    for d in docs:
        if d.label is None:
            raise DatasetError(f"document {d.id!r} is unlabeled")
        by_class[d.label].append(d.id)
    assignment = {}
    pos = 0
    for c in CLASSES:
        members = by_class[c]
        order = rng.permutation(len(members))
        for j in order:
            assignment[members[j]] = pos % k
            pos += 1
    return FoldAssignment(k, {i: assignment[i] for i in ids})


def stratified_holdout(docs: Sequence[Document], fraction: float, seed: int):
    """Split off roughly ``fraction`` of each class (rounded half up) as a held-out set."""
    rng = np.random.default_rng(seed)
    by_class: dict = {c: [] for c in CLASSES}
    for i, d in enumerate(docs):
        by_class[d.label].append(i)
    held = set()
    for c in CLASSES:
        idx = by_class[c]
        n = int(np.floor(len(idx) * fraction + 0.5))
        if n >= len(idx):
            n = len(idx) - 1
        if n <= 0:
            continue
        perm = rng.permutation(len(idx))
        held.update(idx[j] for j in perm[:n])
    keep = [d for i, d in enumerate(docs) if i not in held]
    out = [d for i, d in enumerate(docs) if i in held]
    return keep, out
