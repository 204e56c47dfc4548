"""Metrics, stratified cross-validation and the augmentation ablation protocol."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .corpus import Document, stratified_kfold
from .labels import CLASS_INDEX, CLASSES, HUMAN_CLASSES, N_CLASSES

log = logging.getLogger(__name__)


def _indices(labels) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int64)
    for i, v in enumerate(labels):
        if isinstance(v, str):
            if v not in CLASS_INDEX:
                raise ValueError(f"unknown label {v!r}")
            out[i] = CLASS_INDEX[v]
        else:
            if not 0 <= int(v) < N_CLASSES:
                raise ValueError(f"label index {v} out of range")
            out[i] = int(v)
    return out


def confusion_matrix(gold, pred) -> np.ndarray:
    """7x7 counts, rows gold and columns predicted, in label-set order."""
    if len(gold) != len(pred):
        raise ValueError(f"gold and pred lengths differ ({len(gold)} vs {len(pred)})")
    return kernels.confusion_counts(_indices(gold), _indices(pred), N_CLASSES)


def _f1_from_confusion(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    f1 = []
    for c in range(N_CLASSES):
        if support[c] == 0 and predicted[c] == 0:
            f1.append(None)
            continue
        p = tp[c] / predicted[c] if predicted[c] else 0.0
        r = tp[c] / support[c] if support[c] else 0.0
        f1.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return f1, support


def _recall_from_confusion(cm: np.ndarray):
    support = cm.sum(axis=1)
    return [float(cm[c, c] / support[c]) if support[c] else None for c in range(N_CLASSES)]


@dataclass
class MetricsReport:
    """Averaged metrics over ``n_runs`` runs (folds or repeats).

    ``per_class_f1`` entries are None for classes that neither occur in gold
    nor get predicted. The confusion matrix is summed over runs.
    """

    accuracy: float
    macro_f1: float
    per_class_f1: list
    confusion: np.ndarray
    n_runs: int = 1
    runs: list = field(default_factory=list)
    per_class_recall: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_f1": dict(zip(CLASSES, self.per_class_f1)),
            "per_class_recall": dict(zip(CLASSES, self.per_class_recall)),
            "confusion": {"classes": list(CLASSES), "matrix": self.confusion.tolist()},
            "n_runs": self.n_runs,
            "runs": self.runs,
        }


def macro_f1_indices(gold, pred) -> float:
    cm = kernels.confusion_counts(np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64), N_CLASSES)
    f1, support = _f1_from_confusion(cm)
    present = [f1[c] for c in range(N_CLASSES) if support[c] > 0]
    return float(np.mean(present)) if present else 0.0


def metrics(gold, pred) -> MetricsReport:
    """Accuracy, per-class F1 and macro-F1 over classes with gold support.

    F1 is 0 for a present class when precision + recall is 0.
    """
    if len(gold) == 0:
        raise ValueError("metrics of an empty prediction set")
    cm = confusion_matrix(gold, pred)
    f1, support = _f1_from_confusion(cm)
    present = [f1[c] for c in range(N_CLASSES) if support[c] > 0]
    acc = float(np.trace(cm) / cm.sum())
    macro = float(sum(present) / len(present))
    run = {"accuracy": acc, "macro_f1": macro}
    return MetricsReport(acc, macro, f1, cm, 1, [run], _recall_from_confusion(cm))


def _mean_opt(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate(reports: Sequence[MetricsReport], labels: Sequence = ()) -> MetricsReport:
    """Average accuracy, macro-F1 and per-class scores; sum confusion matrices."""
    if not reports:
        raise ValueError("nothing to aggregate")
    runs = []
    for i, r in enumerate(reports):
        run = {"accuracy": r.accuracy, "macro_f1": r.macro_f1}
        if labels:
            run["run"] = labels[i]
        runs.append(run)
    return MetricsReport(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        macro_f1=float(np.mean([r.macro_f1 for r in reports])),
        per_class_f1=[_mean_opt([r.per_class_f1[c] for r in reports]) for c in range(N_CLASSES)],
        confusion=np.sum([r.confusion for r in reports], axis=0),
        n_runs=len(reports),
        runs=runs,
        per_class_recall=[_mean_opt([r.per_class_recall[c] for r in reports]) for c in range(N_CLASSES)],
    )


# ------------------------------------------------------------ cross validation


def run_cv(docs: Sequence[Document], model_spec, k: int = 5, seed: int = 0) -> MetricsReport:
    """Stratified k-fold CV; every fold fits a fresh model on its training part.

    ``model_spec`` needs ``fit(train_docs, seed)`` returning an object with
    ``predict_labels(docs)``. Vocabularies are built inside ``fit`` so they
    only see the fold's training data. Fold f trains with seed ``seed + f``.
    """
    folds = stratified_kfold(docs, k, seed)
    reports = []
    for f in range(k):
        train, test = folds.split(docs, f)
        try:
            model = model_spec.fit(train, seed + f)
            pred = model.predict_labels(test)
        except Exception as e:
            raise RuntimeError(f"fold {f}: {e}") from e
        reports.append(metrics([d.label for d in test], pred))
        log.info("fold %d: acc %.3f macro-F1 %.3f", f, reports[-1].accuracy, reports[-1].macro_f1)
    return aggregate(reports, labels=[f"fold{f}" for f in range(k)])


# ------------------------------------------------------------ augmentation ablation

TRAIN_VARIANTS = ("imbalanced", "balanced", "seven_class")
TEST_VARIANTS = ("six_class", "seven_class")
TRAIN_FRACTION = 0.7

# Reference test-set sizes for the augmentation ablation. Every other
# (origin, class) group follows the 7:3 rule; these two do not.
REFERENCE_TEST_SIZES = {("fd", "Cons"): 10, ("augmented", "MRE"): 30}


def seventy_thirty(n: int) -> tuple[int, int]:
    """(train, test) sizes with train = round_half_up(0.7 n)."""
    n_train = (7 * n + 5) // 10
    return n_train, n - n_train


@dataclass
class AugmentationSplits:
    train_imbalanced: list
    train_balanced: list
    train_seven_class: list
    test_six_class: list
    test_seven_class: list

    def train(self, variant: str) -> list:
        if variant not in TRAIN_VARIANTS:
            raise ValueError(f"unknown training variant {variant!r}; expected one of {TRAIN_VARIANTS}")
        return getattr(self, f"train_{variant}")

    def test(self, variant: str) -> list:
        if variant not in TEST_VARIANTS:
            raise ValueError(f"unknown test variant {variant!r}; expected one of {TEST_VARIANTS}")
        return getattr(self, f"test_{variant}")

    def counts(self) -> dict:
        out = {}
        for name in ("train_imbalanced", "train_balanced", "test_six_class",
                     "train_seven_class", "test_seven_class"):
            c = {k: 0 for k in CLASSES}
            for d in getattr(self, name):
                c[d.label] += 1
            out[name] = c
        return out


def split_augmentation_sets(docs: Sequence[Document], seed: int,
                            test_sizes: Optional[Mapping] = None) -> AugmentationSplits:
    """Build the ablation training/test sets from FD and augmented documents.

    * FD documents of the five classes other than MRE: split 7:3 into the
      imbalanced training set and the six-class test set.
    * FD MRE documents: test only.
    * augmented MRE documents: split 7:3 into imbalanced train and test.
    * the balanced training set adds every other augmented human-class document.
    * AnimalVac documents split 7:3 and extend balanced train / six-class test
      into the seven-class variants.

    ``test_sizes`` maps ``(origin, class)`` to an explicit test count overriding
    the 7:3 rule (see ``REFERENCE_TEST_SIZES``).
    """
    test_sizes = dict(test_sizes or {})
    rng = np.random.default_rng(seed)
    groups: dict = {}
    for d in docs:
        if d.label is None:
            raise ValueError(f"document {d.id!r} is unlabeled")
        origin = "fd" if d.origin == "fd" else "augmented"
        groups.setdefault((origin, d.label), []).append(d)

    def split(key):
        members = groups.get(key, [])
        if key in test_sizes:
            n_test = int(test_sizes[key])
            if not 0 <= n_test <= len(members):
                raise ValueError(f"test size {n_test} impossible for {key} with {len(members)} documents")
        else:
            n_test = seventy_thirty(len(members))[1]
        perm = rng.permutation(len(members))
        test_idx = set(perm[:n_test].tolist())
        tr = [m for i, m in enumerate(members) if i not in test_idx]
        te = [m for i, m in enumerate(members) if i in test_idx]
        return tr, te

    imb, test6, extra = [], [], []
    for c in HUMAN_CLASSES:
        if c == "MRE":
            test6 += groups.get(("fd", c), [])
            tr, te = split(("augmented", c))
            imb += tr
            test6 += te
        else:
            tr, te = split(("fd", c))
            imb += tr
            test6 += te
            extra += groups.get(("augmented", c), [])
    animal = groups.get(("augmented", "AnimalVac"), []) + groups.get(("fd", "AnimalVac"), [])
    groups[("all", "AnimalVac")] = animal
    a_tr, a_te = split(("all", "AnimalVac"))
    balanced = imb + extra
    return AugmentationSplits(imb, balanced, balanced + a_tr, test6, test6 + a_te)


def run_augmentation_experiment(docs, train_variant: str, test_variant: str, model_spec,
                                repeats: int = 5, seed: int = 0,
                                test_sizes: Optional[Mapping] = None) -> MetricsReport:
    """Train on one ablation variant and test on another, ``repeats`` times.

    The split is fixed by ``seed``; run r trains with seed ``seed + r``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    splits = split_augmentation_sets(docs, seed, test_sizes)
    train, test = splits.train(train_variant), splits.test(test_variant)
    gold = [d.label for d in test]
    reports = []
    for r in range(repeats):
        model = model_spec.fit(train, seed + r)
        reports.append(metrics(gold, model.predict_labels(test)))
    return aggregate(reports, labels=[f"run{r}" for r in range(repeats)])


# ------------------------------------------------------------ reporting


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.2f}"


def render_markdown(rep: MetricsReport, title: str = "Results") -> str:
    lines = [f"# {title}", ""]
    header = ["Macro-F1", "Accuracy", *CLASSES]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    cells = [_fmt(rep.macro_f1), _fmt(rep.accuracy), *[_fmt(v) for v in rep.per_class_f1]]
    lines.append("| " + " | ".join(cells) + " |")
    lines += ["", f"Averaged over {rep.n_runs} run(s); per-class columns are F1.", "",
              "## Confusion matrix (rows gold, columns predicted)", ""]
    lines.append("| gold \\ pred | " + " | ".join(CLASSES) + " |")
    lines.append("|" + "---|" * (N_CLASSES + 1))
    for i, c in enumerate(CLASSES):
        lines.append(f"| {c} | " + " | ".join(str(int(x)) for x in rep.confusion[i]) + " |")
    return "\n".join(lines) + "\n"


def report(rep: MetricsReport, path, title: str = "Results") -> Path:
    """Write a Markdown table plus a machine-readable ``.json`` beside it."""
    path = Path(path)
    try:
        path.write_text(render_markdown(rep, title), encoding="utf-8")
        path.with_suffix(".json").write_text(
            json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as e:
        raise OSError(f"cannot write report to {path}: {e}") from e
    return path
