"""Binary classification metrics with class-support weighting.

Weighted F1 is the headline metric: the per-class F1 scores averaged by
class support, which keeps the 1:3 agitation/non-agitation imbalance from
rewarding majority-only predictors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    """Headline rates plus the counts they were computed from."""

    accuracy: float
    precision: float
    recall: float
    weighted_f1: float
    f1_positive: float
    f1_negative: float
    confusion: ConfusionMatrix
    precision_zero_denominator: bool = False
    majority_baseline_accuracy: float = 0.0
    majority_baseline_weighted_f1: float = 0.0
    model_id: str = ""
    dataset_id: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "weighted_f1": self.weighted_f1,
            "f1_positive": self.f1_positive,
            "f1_negative": self.f1_negative,
            "counts": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "tn": self.confusion.tn,
                "fn": self.confusion.fn,
            },
            "precision_zero_denominator": self.precision_zero_denominator,
            "majority_baseline_accuracy": self.majority_baseline_accuracy,
            "majority_baseline_weighted_f1": self.majority_baseline_weighted_f1,
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "seed": self.seed,
        }


@dataclass
class TrainLog:
    """Per-epoch (or per-round) training trace and the chosen stopping point."""

    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    chosen: int = 0

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_metric": self.val_metric,
            "chosen": self.chosen,
        }


def _f1(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")
    if y_true.size == 0:
        raise ValueError("cannot compute metrics on empty inputs")
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
    )


def weighted_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Support-weighted mean of the per-class F1 scores."""
    return compute_metrics(y_true, y_pred).weighted_f1


def majority_baseline(y_true: np.ndarray) -> tuple[float, float]:
    """(accuracy, weighted F1) of always predicting the majority class."""
    y_true = np.asarray(y_true, dtype=int)
    n_pos = int(y_true.sum())
    majority = 1 if n_pos * 2 > y_true.size else 0
    preds = np.full_like(y_true, majority)
    rep = compute_metrics(y_true, preds, _with_baseline=False)
    return rep.accuracy, rep.weighted_f1


def compute_metrics(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    model_id: str = "",
    dataset_id: str = "",
    seed: int | None = None,
    _with_baseline: bool = True,
) -> MetricsReport:
    """Accuracy, precision, recall, per-class F1 and weighted F1.

    Precision with zero predicted positives is reported as 0 and flagged.
    """
    cm = confusion_matrix(y_true, y_pred)
    n = cm.total

    accuracy = (cm.tp + cm.tn) / n
    zero_den = (cm.tp + cm.fp) == 0
    precision = 0.0 if zero_den else cm.tp / (cm.tp + cm.fp)
    recall = 0.0 if (cm.tp + cm.fn) == 0 else cm.tp / (cm.tp + cm.fn)

    # Negative class viewed as "positive" for its own F1.
    neg_precision = 0.0 if (cm.tn + cm.fn) == 0 else cm.tn / (cm.tn + cm.fn)
    neg_recall = 0.0 if (cm.tn + cm.fp) == 0 else cm.tn / (cm.tn + cm.fp)

    f1_pos = _f1(precision, recall)
    f1_neg = _f1(neg_precision, neg_recall)

    support_pos = cm.tp + cm.fn
    support_neg = cm.tn + cm.fp
    f_w = (support_pos * f1_pos + support_neg * f1_neg) / n

    base_acc = base_fw = 0.0
    if _with_baseline:
        base_acc, base_fw = majority_baseline(y_true)

    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        weighted_f1=f_w,
        f1_positive=f1_pos,
        f1_negative=f1_neg,
        confusion=cm,
        precision_zero_denominator=zero_den,
        majority_baseline_accuracy=base_acc,
        majority_baseline_weighted_f1=base_fw,
        model_id=model_id,
        dataset_id=dataset_id,
        seed=seed,
    )
