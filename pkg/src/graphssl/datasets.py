"""Synthetic point clouds, CSV ingestion and labeled-subset sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import PointCloud
from .propagation import LabelSet

__all__ = [
    "DatasetError",
    "LabeledDataset",
    "TrialSplit",
    "two_moons",
    "two_circles",
    "load_csv",
    "features_from_csv_embedding",
    "sample_labels",
]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    cloud: PointCloud
    truth: np.ndarray
    class_names: tuple = ()
    standardized: bool = False

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=np.int64).ravel()
        if truth.size != self.cloud.n:
            raise DatasetError(f"{truth.size} labels for {self.cloud.n} points")
        if truth.min() < 0:
            raise DatasetError("class indices must be nonnegative")
        if np.any(np.bincount(truth) == 0):
            raise DatasetError("every class must be nonempty")
        truth.setflags(write=False)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n(self) -> int:
        return self.cloud.n

    @property
    def p(self) -> int:
        return self.cloud.d

    @property
    def k(self) -> int:
        return int(self.truth.max()) + 1

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.truth, minlength=self.k)

    @property
    def ir(self) -> float:
        counts = self.class_counts
        return float(counts.max() / counts.min())

    @property
    def minority_class(self) -> int:
        # argmin returns the first class among ties, i.e. first appearance order
        return int(np.argmin(self.class_counts))

    def manifest(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "k": self.k,
            "ir": self.ir,
            "class_counts": self.class_counts.tolist(),
            "class_names": list(self.class_names),
            "standardized": self.standardized,
        }


@dataclass(frozen=True)
class TrialSplit:
    labeled: LabelSet
    seed: int


def two_moons(n_major: int, n_minor: int, noise: float = 0.15, seed=None) -> LabeledDataset:
    """Two interleaving half circles of unit radius.

    Class 0 (``n_major`` points) lies on the upper arc (cos t, sin t); class 1
    (``n_minor`` points) on the lower arc (1 - cos t, 0.5 - sin t), with t
    evenly spaced over [0, pi]. Gaussian noise of standard deviation ``noise``
    is added to every coordinate.
    """
    if n_major < 1 or n_minor < 1:
        raise DatasetError("both moons need at least one point")
    if noise < 0:
        raise DatasetError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    t0 = np.linspace(0.0, np.pi, n_major)
    t1 = np.linspace(0.0, np.pi, n_minor)
    X = np.concatenate([
        np.column_stack([np.cos(t0), np.sin(t0)]),
        np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]),
    ])
    X = X + rng.normal(0.0, noise, X.shape) if noise > 0 else X
    y = np.repeat([0, 1], [n_major, n_minor])
    return LabeledDataset(PointCloud(X), y, ("major", "minor"))


def two_circles(n_major: int, n_minor: int, noise: float = 0.1, radius_ratio: float = 0.5,
                seed=None) -> LabeledDataset:
    """Concentric circles: class 0 on the unit circle, class 1 on radius ``radius_ratio``."""
    if n_major < 1 or n_minor < 1:
        raise DatasetError("both circles need at least one point")
    if not 0 < radius_ratio < 1:
        raise DatasetError("radius_ratio must lie in (0, 1)")
    if noise < 0:
        raise DatasetError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    t0 = np.linspace(0.0, 2 * np.pi, n_major, endpoint=False)
    t1 = np.linspace(0.0, 2 * np.pi, n_minor, endpoint=False)
    X = np.concatenate([
        np.column_stack([np.cos(t0), np.sin(t0)]),
        radius_ratio * np.column_stack([np.cos(t1), np.sin(t1)]),
    ])
    X = X + rng.normal(0.0, noise, X.shape) if noise > 0 else X
    y = np.repeat([0, 1], [n_major, n_minor])
    return LabeledDataset(PointCloud(X), y, ("major", "minor"))


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, delimiter: str = ",", standardize: bool = True) -> LabeledDataset:
    """Read a feature table with one class-label column.

    A first row with any non-numeric feature cell is taken as a header. Lines
    starting with ``@`` (KEEL ``.dat`` metadata) and blank lines are skipped.
    ``label_column`` is a zero-based index (negative counts from the end) or a
    header name. Class tokens become indices in order of first appearance.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            cells = [c.strip() for c in raw]
            if not cells or all(c == "" for c in cells) or cells[0].startswith("@"):
                continue
            rows.append((lineno, cells))
    if not rows:
        raise DatasetError(f"{path}: no data rows")

    header = None
    first_line, first = rows[0]
    arity = len(first)
    if arity < 2:
        raise DatasetError(f"{path}:{first_line}: need at least one feature and a label column")

    if isinstance(label_column, str):
        if label_column not in first:
            raise DatasetError(f"{path}: no column named {label_column!r} in header")
        header = first
        col = first.index(label_column)
        rows = rows[1:]
    else:
        col = label_column if label_column >= 0 else arity + label_column
        if not 0 <= col < arity:
            raise DatasetError(f"{path}: label column {label_column} out of range for {arity} columns")
        if any(not _is_number(c) for j, c in enumerate(first) if j != col):
            header = first
            rows = rows[1:]
    if not rows:
        raise DatasetError(f"{path}: header but no data rows")

    features, tokens = [], []
    for lineno, cells in rows:
        if len(cells) != arity:
            raise DatasetError(f"{path}: line {lineno}: expected {arity} columns, found {len(cells)}")
        values = []
        for j, cell in enumerate(cells):
            if j == col:
                continue
            if cell in ("", "?", "NA", "nan", "NaN"):
                raise DatasetError(f"{path}: line {lineno}: missing value in column {j}")
            try:
                values.append(float(cell))
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}: non-numeric feature {cell!r} in column {j}") from None
        if cells[col] == "":
            raise DatasetError(f"{path}: line {lineno}: empty class label")
        features.append(values)
        tokens.append(cells[col])

    names = list(dict.fromkeys(tokens))
    index = {name: i for i, name in enumerate(names)}
    y = np.array([index[t] for t in tokens])
    X = np.array(features, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DatasetError(f"{path}: non-finite feature value")
    if standardize:
        X = _standardize(X)
    del header
    return LabeledDataset(PointCloud(X), y, tuple(names), standardized=standardize)


def _standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - mean) / std


def features_from_csv_embedding(path, label_column=-1, delimiter: str = ",") -> LabeledDataset:
    """Load precomputed embedding vectors; features are used as-is (no standardization)."""
    return load_csv(path, label_column=label_column, delimiter=delimiter, standardize=False)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_labels(dataset: LabeledDataset, per_class=None, fraction: float | None = None,
                  ir_proportional: bool = True, seed=None) -> TrialSplit:
    """Draw labeled nodes uniformly without replacement inside each class.

    Give either ``per_class`` (an int, or one count per class) or ``fraction``.
    With ``fraction`` and ``ir_proportional`` each class gets
    round(fraction * class_size) labels; without ``ir_proportional`` every
    class gets round(fraction * n / k). Either way each class gets at least 1.
    """
    counts = dataset.class_counts
    k = dataset.k
    if (per_class is None) == (fraction is None):
        raise DatasetError("give exactly one of per_class or fraction")
    if per_class is not None:
        plan = np.broadcast_to(np.asarray(per_class, dtype=np.int64), (k,)).copy()
    else:
        if not 0 < fraction <= 1:
            raise DatasetError("fraction must lie in (0, 1]")
        if ir_proportional:
            plan = np.array([_round_half_up(fraction * c) for c in counts])
        else:
            plan = np.full(k, _round_half_up(fraction * dataset.n / k))
        plan = np.maximum(plan, 1)
    for c in range(k):
        name = dataset.class_names[c] if c < len(dataset.class_names) else str(c)
        if plan[c] < 1:
            raise DatasetError(f"class {name!r} must receive at least one label")
        if plan[c] > counts[c]:
            raise DatasetError(f"class {name!r} has {counts[c]} points, cannot draw {plan[c]} labels")

    rng = np.random.default_rng(seed)
    idx, cls = [], []
    for c in range(k):
        members = np.flatnonzero(dataset.truth == c)
        chosen = np.sort(rng.choice(members, size=int(plan[c]), replace=False))
        idx.append(chosen)
        cls.append(np.full(chosen.size, c))
    return TrialSplit(LabelSet(np.concatenate(idx), np.concatenate(cls), k), seed)
