"""Confusion matrices, per-class precision/recall/F1 and trial aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MetricsError",
    "ConfusionMatrix",
    "ClassMetrics",
    "MetricSummary",
    "confusion",
    "class_metrics",
    "aggregate",
    "METRIC_COLUMNS",
]


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    scope: str = "all"

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    undefined: tuple = field(default=())  # names of metrics that hit the 0/0 rule

    def as_dict(self) -> dict:
        out = {"accuracy": float(self.accuracy)}
        for j in range(len(self.precision)):
            out[f"precision_{j}"] = float(self.precision[j])
            out[f"recall_{j}"] = float(self.recall[j])
            out[f"f1_{j}"] = float(self.f1[j])
        return out


def confusion(truth, predictions, scope: str = "all", labeled_indices=None, k: int | None = None) -> ConfusionMatrix:
    """Count (truth, prediction) pairs.

    ``scope="unlabeled"`` drops the nodes in ``labeled_indices`` first.
    """
    truth = np.asarray(truth, dtype=np.int64).ravel()
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    if truth.shape != predictions.shape:
        raise MetricsError(f"length mismatch: {truth.size} truths vs {predictions.size} predictions")
    if k is None:
        k = int(max(truth.max(initial=0), predictions.max(initial=0))) + 1
    if truth.size and (min(truth.min(), predictions.min()) < 0 or max(truth.max(), predictions.max()) >= k):
        raise MetricsError(f"labels must lie in [0, {k})")
    if scope == "unlabeled":
        mask = np.ones(truth.size, dtype=bool)
        if labeled_indices is not None:
            mask[np.asarray(labeled_indices, dtype=np.int64)] = False
        truth, predictions = truth[mask], predictions[mask]
    elif scope != "all":
        raise MetricsError(f"unknown scope {scope!r}")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (truth, predictions), 1)
    return ConfusionMatrix(counts, scope)


def _ratio(num, den):
    den = np.asarray(den, dtype=float)
    out = np.zeros_like(den)
    np.divide(num, den, out=out, where=den != 0)
    return out


def class_metrics(cm) -> ClassMetrics:
    """Precision, recall, F1 per class and overall accuracy; every 0/0 is taken as 0."""
    C = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.size == 0:
        raise MetricsError("confusion matrix must be square and nonempty")
    total = C.sum()
    if total == 0:
        raise MetricsError("confusion matrix is empty")
    tp = np.diag(C)
    predicted = C.sum(axis=0)
    actual = C.sum(axis=1)
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, actual)
    f1 = _ratio(2 * precision * recall, precision + recall)
    undefined = tuple(
        [f"precision_{j}" for j in np.flatnonzero(predicted == 0)]
        + [f"recall_{j}" for j in np.flatnonzero(actual == 0)]
        + [f"f1_{j}" for j in np.flatnonzero(precision + recall == 0)]
    )
    return ClassMetrics(precision, recall, f1, float(tp.sum() / total), undefined)


# Column order of the per-dataset imbalance table: class 0 is taken as the
# majority, class 1 as the minority unless the caller says otherwise.
METRIC_COLUMNS = ("accuracy", "f1_min", "f1_maj", "recall_min", "recall_maj", "precision_min", "precision_maj")


@dataclass(frozen=True)
class MetricSummary:
    n_trials: int
    mean_confusion: np.ndarray
    mean_metrics: dict
    sd_metrics: dict


def aggregate(reports) -> MetricSummary:
    """Mean confusion matrix plus mean and sample standard deviation of every metric.

    ``reports`` is a sequence of (ConfusionMatrix, ClassMetrics) pairs. Means
    use Welford's update, so the result does not depend on how the trials were
    scheduled beyond their order, and sorting by trial index fixes that order.
    """
    reports = list(reports)
    if not reports:
        raise MetricsError("nothing to aggregate")
    k = reports[0][0].k
    if any(cm.k != k for cm, _ in reports):
        raise MetricsError("trials disagree on the number of classes")

    n = 0
    mean_cm = np.zeros((k, k))
    mean = {}
    m2 = {}
    for cm, met in reports:
        n += 1
        mean_cm += (cm.counts - mean_cm) / n
        for key, value in met.as_dict().items():
            if key not in mean:
                mean[key] = 0.0
                m2[key] = 0.0
            delta = value - mean[key]
            mean[key] += delta / n
            m2[key] += delta * (value - mean[key])
    sd = {key: (float(np.sqrt(m2[key] / (n - 1))) if n > 1 else 0.0) for key in mean}
    return MetricSummary(n, mean_cm, {k_: float(v) for k_, v in mean.items()}, sd)
