"""Keyword/hashtag rules for collecting minority-class candidates, plus the
annotation round trip and balance reporting."""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .corpus import Document, deduplicate, duplicate_key
from .labels import CLASS_INDEX, CLASSES, UnknownLabelError, normalize_label

log = logging.getLogger(__name__)

QUEUE_FIELDS = ("id", "text", "suggested_classes", "label")


def _keyword_pattern(phrase: str) -> re.Pattern:
    words = phrase.split()
    body = r"\s+".join(re.escape(w) for w in words)
    return re.compile(rf"(?<!\w){body}(?!\w)", re.IGNORECASE)


def _hashtag_pattern(tag: str) -> re.Pattern:
    name = tag.lstrip("#")
    return re.compile(rf"(?<![\w#])#{re.escape(name)}(?!\w)", re.IGNORECASE)


@dataclass(frozen=True)
class KeywordRule:
    target_class: str
    keywords: tuple = ()
    hashtags: tuple = ()
    _patterns: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.target_class not in CLASSES:
            raise UnknownLabelError(f"rule targets unknown class {self.target_class!r}")
        if not self.keywords and not self.hashtags:
            raise ValueError(f"rule for {self.target_class} has no keywords or hashtags")
        pats = [(k, _keyword_pattern(k)) for k in self.keywords]
        pats += [(h, _hashtag_pattern(h)) for h in self.hashtags]
        object.__setattr__(self, "_patterns", tuple(pats))


@dataclass(frozen=True)
class MatchResult:
    doc_id: str
    matches: tuple  # ((class, pattern), ...)

    @property
    def classes(self) -> list:
        seen = []
        for c, _ in self.matches:
            if c not in seen:
                seen.append(c)
        return seen

    def __bool__(self) -> bool:
        return bool(self.matches)


def rules_from_dict(spec: Mapping) -> list[KeywordRule]:
    rules = []
    for cls, body in spec.items():
        rules.append(
            KeywordRule(
                normalize_label(cls),
                tuple(body.get("keywords", ())),
                tuple(body.get("hashtags", ())),
            )
        )
    rules.sort(key=lambda r: CLASS_INDEX[r.target_class])
    return rules


def load_rules(path=None) -> list[KeywordRule]:
    """Load a ``{class: {keywords: [...], hashtags: [...]}}`` rule file.

    With no path the shipped keyword/hashtag table is used.
    """
    if path is None:
        text = resources.files("narrative_cantm").joinpath("data/augment_rules.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return rules_from_dict(json.loads(text))


def match_rules(doc: Document, rules: Sequence[KeywordRule]) -> MatchResult:
    """Run every rule over the raw (uncleaned) text; all hits are reported."""
    text = doc.full_text
    hits = []
    for rule in rules:
        for pattern, rx in rule._patterns:
            if rx.search(text) and (rule.target_class, pattern) not in hits:
                hits.append((rule.target_class, pattern))
    return MatchResult(doc.id, tuple(hits))


def filter_candidates(
    docs: Iterable[Document],
    rules: Sequence[KeywordRule],
    existing: Iterable[Document] = (),
) -> list[tuple[Document, MatchResult]]:
    """Documents with at least one rule hit, minus duplicates, sorted by id."""
    matched = []
    for d in docs:
        m = match_rules(d, rules)
        if m:
            matched.append((d, m))
    kept = deduplicate([d for d, _ in matched], existing)
    keep_keys = {id(d) for d in kept}
    out = [(d, m) for d, m in matched if id(d) in keep_keys]
    out.sort(key=lambda dm: dm[0].id)
    return out


def export_annotation_queue(candidates: Sequence[tuple[Document, MatchResult]], path) -> None:
    if not candidates:
        raise ValueError("no candidates to export")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUEUE_FIELDS)
        for d, m in candidates:
            w.writerow([d.id, d.full_text, ";".join(m.classes), ""])


def import_annotations(path, platform: str = "twitter") -> list[Document]:
    """Read an annotated queue back as augmented documents.

    Rows left unlabeled are skipped (logged); an unknown label is an error
    naming the row.
    """
    docs = []
    unlabeled = 0
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(QUEUE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: annotation queue missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                label = normalize_label(row["label"])
            except UnknownLabelError:
                raise UnknownLabelError(
                    f"{path} line {lineno} (id {row['id']!r}): unknown label {row['label']!r}"
                ) from None
            if label is None:
                unlabeled += 1
                continue
            docs.append(Document(row["id"], row["text"], platform, label, "augmented"))
    if unlabeled:
        log.warning("%s: %d rows left unlabeled were not imported", path, unlabeled)
    return docs


@dataclass(frozen=True)
class BalanceReport:
    current: dict
    target: dict

    @property
    def deficit(self) -> dict:
        return {c: max(0, self.target.get(c, 0) - self.current.get(c, 0)) for c in CLASSES}

    def rows(self):
        d = self.deficit
        return [(c, self.current.get(c, 0), self.target.get(c, 0), d[c]) for c in CLASSES]


def balance_report(dataset, targets: Mapping) -> BalanceReport:
    """Per-class shortfall of ``dataset`` (documents or a class->count map) against targets."""
    if isinstance(dataset, Mapping):
        current = {c: int(dataset.get(c, 0)) for c in CLASSES}
    else:
        current = {c: 0 for c in CLASSES}
        for d in dataset:
            if d.label is not None:
                current[d.label] += 1
    return BalanceReport(current, {c: int(targets.get(c, 0)) for c in CLASSES})


__all__ = [
    "KeywordRule",
    "MatchResult",
    "BalanceReport",
    "load_rules",
    "rules_from_dict",
    "match_rules",
    "filter_candidates",
    "export_annotation_queue",
    "import_annotations",
    "balance_report",
    "duplicate_key",
]
