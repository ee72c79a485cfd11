"""Metrics, dataset splitting, label voting and timing summaries.

Class 1 (vulnerable) is the positive class everywhere.  Ratios with a zero
denominator are defined as 0 so reports stay total on degenerate test
sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .validation import check_consistent_length


class LengthMismatchError(ValueError):
    """Predicted and true label sequences differ in length."""


class EmptyEvaluationError(ValueError):
    """No samples to evaluate."""


class EmptyDatasetError(ValueError):
    """No samples to split."""


class KTooLargeError(ValueError):
    """More folds requested than samples available."""


class InsufficientSamplesError(ValueError):
    """The requested split sizes cannot be satisfied."""


class EmptyMeasurementsError(ValueError):
    """No timing measurements supplied."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ToolVerdicts:
    """Three analyzer verdicts for one contract (True = flagged vulnerable)."""

    flags: tuple[bool, bool, bool]
    tools: tuple[str, str, str] = ("tool1", "tool2", "tool3")

    def __post_init__(self):
        if len(self.flags) != 3:
            raise ValueError("exactly three verdicts expected")


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    weighted_f1: float
    tpr: float
    fnr: float
    tnr: float
    fpr: float
    counts: ConfusionCounts
    avg_detection_seconds: float | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "weighted_f1": self.weighted_f1,
            "tpr": self.tpr,
            "fnr": self.fnr,
            "tnr": self.tnr,
            "fpr": self.fpr,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "avg_detection_seconds": self.avg_detection_seconds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    def to_table(self) -> str:
        rows = [
            ("accuracy", f"{self.accuracy:.4f}"),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("f1", f"{self.f1:.4f}"),
            ("weighted_f1", f"{self.weighted_f1:.4f}"),
            ("tpr", f"{self.tpr:.4f}"),
            ("fnr", f"{self.fnr:.4f}"),
            ("tnr", f"{self.tnr:.4f}"),
            ("fpr", f"{self.fpr:.4f}"),
            ("tp/fp/tn/fn", f"{self.counts.tp}/{self.counts.fp}/{self.counts.tn}/{self.counts.fn}"),
        ]
        if self.avg_detection_seconds is not None:
            rows.append(("avg_detection_s", f"{self.avg_detection_seconds:.6f}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def confusion(predicted, actual) -> ConfusionCounts:
    pred = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(actual, dtype=np.int64)
    check_consistent_length(pred, true, LengthMismatchError)
    return ConfusionCounts(
        tp=int(((pred == 1) & (true == 1)).sum()),
        fp=int(((pred == 1) & (true == 0)).sum()),
        tn=int(((pred == 0) & (true == 0)).sum()),
        fn=int(((pred == 0) & (true == 1)).sum()),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def metrics(counts: ConfusionCounts, avg_detection_seconds: float | None = None) -> EvaluationReport:
    """Standard binary-classification summary with class-1 positive.

    weighted_f1 averages the two per-class F1 scores weighted by true class
    support, so it is invariant under relabeling the classes.
    """
    if counts.total == 0:
        raise EmptyEvaluationError("no samples evaluated")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio_f1(precision, recall)
    # Class 0 viewed as positive.
    precision0 = _ratio(counts.tn, counts.tn + counts.fn)
    recall0 = _ratio(counts.tn, counts.tn + counts.fp)
    f1_0 = _ratio_f1(precision0, recall0)
    support1 = counts.tp + counts.fn
    support0 = counts.tn + counts.fp
    weighted_f1 = (support1 * f1 + support0 * f1_0) / counts.total
    tnr = _ratio(counts.tn, counts.tn + counts.fp)
    return EvaluationReport(
        accuracy=_ratio(counts.tp + counts.tn, counts.total),
        precision=precision,
        recall=recall,
        f1=f1,
        weighted_f1=weighted_f1,
        tpr=recall,
        fnr=1.0 - recall if (counts.tp + counts.fn) else 0.0,
        tnr=tnr,
        fpr=1.0 - tnr if (counts.tn + counts.fp) else 0.0,
        counts=counts,
        avg_detection_seconds=avg_detection_seconds,
    )


def _ratio_f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def _flags(verdicts) -> tuple[bool, ...]:
    flags = tuple(verdicts.flags) if isinstance(verdicts, ToolVerdicts) else tuple(verdicts)
    if len(flags) != 3:
        raise ValueError("exactly three verdicts expected")
    return flags


def majority_label(verdicts) -> int:
    """Positive iff at least two of the three tools flag the contract."""
    return 1 if sum(bool(f) for f in _flags(verdicts)) >= 2 else 0


def union_label(verdicts) -> int:
    """Positive iff any of the three tools flags the contract."""
    return 1 if any(_flags(verdicts)) else 0


def split(dataset, ratio: float, seed: int):
    """Seeded shuffle, then cut with the train size rounded down."""
    items = list(dataset)
    if not items:
        raise EmptyDatasetError("cannot split an empty dataset")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(len(items))
    cut = int(len(items) * ratio)
    train = [items[i] for i in order[:cut]]
    test = [items[i] for i in order[cut:]]
    return train, test


def kfold(dataset, k: int, seed: int):
    """k seeded folds; every sample lands in exactly one validation fold."""
    items = list(dataset)
    if k < 2 or k > len(items):
        raise KTooLargeError(f"k={k} invalid for {len(items)} samples")
    order = np.random.default_rng(seed).permutation(len(items))
    fold_indices = np.array_split(order, k)
    folds = []
    for i in range(k):
        validation = [items[j] for j in fold_indices[i]]
        training = [items[j] for f in range(k) if f != i for j in fold_indices[f]]
        folds.append((training, validation))
    return folds


def holdout_class_split(
    records,
    held_out_category: str,
    train_benign: int,
    train_positive: int,
    test_benign: int,
    test_positive: int,
    seed: int = 0,
):
    """Unknown-category protocol: the held-out positives appear only in test.

    Records need .label (0/1) and, for positives, .category.  Training
    positives are drawn from every other category; benign pools are drawn
    disjointly for the two sides.
    """
    records = list(records)
    rng = np.random.default_rng(seed)
    benign = [r for r in records if r.label == 0]
    held_out = [r for r in records if r.label == 1 and r.category == held_out_category]
    other_positive = [
        r for r in records if r.label == 1 and r.category != held_out_category
    ]
    if not held_out:
        raise InsufficientSamplesError(
            f"no positives tagged with held-out category {held_out_category!r}"
        )
    if len(benign) < train_benign + test_benign:
        raise InsufficientSamplesError(
            f"need {train_benign + test_benign} benign records, have {len(benign)}"
        )
    if len(other_positive) < train_positive:
        raise InsufficientSamplesError(
            f"need {train_positive} non-held-out positives, have {len(other_positive)}"
        )
    if len(held_out) < test_positive:
        raise InsufficientSamplesError(
            f"need {test_positive} held-out positives, have {len(held_out)}"
        )

    def sample(pool, count):
        picked = rng.choice(len(pool), size=count, replace=False)
        return [pool[i] for i in sorted(picked)]

    benign_pick = sample(benign, train_benign + test_benign)
    train = benign_pick[:train_benign] + sample(other_positive, train_positive)
    test = benign_pick[train_benign:] + sample(held_out, test_positive)
    return train, test


@dataclass(frozen=True)
class TimingReport:
    stage_means: dict[str, float]
    total_mean: float

    def to_table(self) -> str:
        rows = [(stage, f"{mean:.6f}") for stage, mean in self.stage_means.items()]
        rows.append(("total", f"{self.total_mean:.6f}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value} s" for name, value in rows)


def timing_report(measurements, stages=("analysis", "encode", "predict")) -> TimingReport:
    """Arithmetic mean per stage over per-contract wall-clock measurements."""
    rows = [tuple(m) for m in measurements]
    if not rows:
        raise EmptyMeasurementsError("no measurements")
    if any(len(r) != len(stages) for r in rows):
        raise ValueError(f"each measurement needs {len(stages)} stage values")
    arr = np.asarray(rows, dtype=np.float64)
    means = arr.mean(axis=0)
    return TimingReport(
        stage_means={stage: float(m) for stage, m in zip(stages, means)},
        total_mean=float(means.sum()),
    )
