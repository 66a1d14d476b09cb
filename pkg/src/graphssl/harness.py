"""Repeated-trial experiments: dataset -> graph -> label split -> solver -> metrics."""

from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .datasets import LabeledDataset, load_csv, sample_labels, two_circles, two_moons
from .graph import build_full_graph, build_knn_graph, operators
from .metrics import METRIC_COLUMNS, ClassMetrics, ConfusionMatrix, aggregate, class_metrics, confusion
from .propagation import DEFAULT_ALPHAS, SolverConfig, solve

__all__ = [
    "ExperimentError",
    "DatasetSpec",
    "GraphSpec",
    "SolverSpec",
    "SamplingPlan",
    "ExperimentConfig",
    "TrialOutcome",
    "ExperimentSummary",
    "SweepResult",
    "run_trial",
    "solve_trial",
    "run_experiment",
    "sweep",
    "emit_report",
    "emit_scatter",
    "load_dataset",
]


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """``kind`` is one of two-moons, two-circles, csv, embedding."""

    kind: str = "two-moons"
    n_major: int = 500
    n_minor: int = 500
    noise: float = 0.15
    radius_ratio: float = 0.5
    path: str = ""
    label_column: str = "-1"
    delimiter: str = ","
    standardize: bool = True

    @property
    def synthetic(self) -> bool:
        return self.kind in ("two-moons", "two-circles")


@dataclass(frozen=True)
class GraphSpec:
    """``kind`` is knn or full; ``sigma`` 0 means local scaling for knn graphs."""

    kind: str = "knn"
    k: int = 10
    sigma: float = 0.0
    floor: float = 1e-12


@dataclass(frozen=True)
class SolverSpec:
    name: str = "igrf"
    alphas: tuple = ()
    tolerance: float = 1e-8
    max_iterations: int = 1500
    class_priors: tuple | None = None
    divergence: str = "continue"
    stationary: str = "sym"

    def config(self) -> SolverConfig:
        return SolverConfig(
            alphas=self.alphas,
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            class_priors=self.class_priors,
            divergence=self.divergence,
            stationary=self.stationary,
        )


@dataclass(frozen=True)
class SamplingPlan:
    """Either ``per_class`` labels in every class or a ``fraction`` of each class."""

    per_class: int = 0
    fraction: float = 0.0
    ir_proportional: bool = True

    def __post_init__(self):
        if (self.per_class > 0) == (self.fraction > 0):
            raise ValueError("sampling plan needs exactly one of per_class or fraction")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    graph: GraphSpec = field(default_factory=GraphSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    sampling: SamplingPlan = field(default_factory=lambda: SamplingPlan(per_class=1))
    trials: int = 1
    base_seed: int = 0
    scope: str = "all"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.scope not in ("all", "unlabeled"):
            raise ValueError(f"scope must be 'all' or 'unlabeled', got {self.scope!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["solver"]["alphas"] = list(self.solver.alphas or DEFAULT_ALPHAS.get(self.solver.name, ()))
        if self.solver.class_priors is not None:
            out["solver"]["class_priors"] = list(self.solver.class_priors)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        solver = dict(data.get("solver", {}))
        if "alphas" in solver:
            solver["alphas"] = tuple(solver["alphas"])
        if solver.get("class_priors") is not None:
            solver["class_priors"] = tuple(solver["class_priors"])
        return cls(
            dataset=DatasetSpec(**data.get("dataset", {})),
            graph=GraphSpec(**data.get("graph", {})),
            solver=SolverSpec(**solver),
            sampling=SamplingPlan(**data.get("sampling", {"per_class": 1})),
            **{k: data[k] for k in ("trials", "base_seed", "scope") if k in data},
        )

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section.field=value`` (or top-level ``field=value``) replacements."""
        cfg = self
        for key, value in dotted.items():
            section, _, name = key.rpartition(".")
            if not section:
                cfg = replace(cfg, **{name: value})
                continue
            part = getattr(cfg, section)
            if name not in {f.name for f in fields(part)}:
                raise KeyError(key)
            cfg = replace(cfg, **{section: replace(part, **{name: value})})
        return cfg


def _label_column(spec: DatasetSpec):
    try:
        return int(spec.label_column)
    except ValueError:
        return spec.label_column


@lru_cache(maxsize=8)
def _load_file_dataset(spec: DatasetSpec) -> LabeledDataset:
    standardize = spec.standardize and spec.kind == "csv"
    return load_csv(spec.path, label_column=_label_column(spec), delimiter=spec.delimiter,
                    standardize=standardize)


def load_dataset(spec: DatasetSpec, seed=None) -> LabeledDataset:
    if spec.kind == "two-moons":
        return two_moons(spec.n_major, spec.n_minor, spec.noise, seed=seed)
    if spec.kind == "two-circles":
        return two_circles(spec.n_major, spec.n_minor, spec.noise, spec.radius_ratio, seed=seed)
    if spec.kind in ("csv", "embedding"):
        return _load_file_dataset(spec)
    raise ValueError(f"unknown dataset kind {spec.kind!r}")


def build_graph(dataset: LabeledDataset, spec: GraphSpec):
    if spec.kind == "knn":
        return build_knn_graph(dataset.cloud, spec.k, spec.sigma or None)
    if spec.kind == "full":
        return build_full_graph(dataset.cloud, spec.sigma, spec.floor)
    raise ValueError(f"unknown graph kind {spec.kind!r}")


@lru_cache(maxsize=8)
def _file_operators(dspec: DatasetSpec, gspec: GraphSpec):
    return operators(build_graph(_load_file_dataset(dspec), gspec))


def _prepare(cfg: ExperimentConfig, seed: int):
    if cfg.dataset.synthetic:
        dataset = load_dataset(cfg.dataset, seed=seed)
        ops = operators(build_graph(dataset, cfg.graph))
    else:
        dataset = load_dataset(cfg.dataset)
        ops = _file_operators(cfg.dataset, cfg.graph)
    return dataset, ops


@dataclass
class TrialOutcome:
    index: int
    seed: int
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    solver: dict
    labeled_indices: list

    def to_dict(self) -> dict:
        return {
            "trial": self.index,
            "seed": self.seed,
            "confusion": self.confusion.counts.tolist(),
            "metrics": self.metrics.as_dict(),
            "undefined_metrics": list(self.metrics.undefined),
            "solver": {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                       for k, v in self.solver.items()},
            "labeled": list(self.labeled_indices),
        }

    @classmethod
    def from_dict(cls, data: dict, scope: str = "all") -> "TrialOutcome":
        cm = ConfusionMatrix(np.asarray(data["confusion"], dtype=np.int64), scope)
        return cls(data["trial"], data["seed"], cm, class_metrics(cm), dict(data["solver"]), list(data["labeled"]))


def solve_trial(cfg: ExperimentConfig, trial_index: int):
    """Return (dataset, split, PropagationResult, seed) for one trial."""
    seed = cfg.base_seed + trial_index
    dataset, ops = _prepare(cfg, seed)
    plan = cfg.sampling
    split = sample_labels(
        dataset,
        per_class=plan.per_class or None,
        fraction=plan.fraction or None,
        ir_proportional=plan.ir_proportional,
        seed=seed,
    )
    result = solve(cfg.solver.name, ops, split.labeled, cfg.solver.config())
    return dataset, split, result, seed


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialOutcome:
    """One trial with seed ``base_seed + trial_index``.

    Synthetic data is regenerated from that seed; file data stays fixed and only
    the labeled subset is redrawn.
    """
    dataset, split, result, seed = solve_trial(cfg, trial_index)
    cm = confusion(dataset.truth, result.predictions, cfg.scope, split.labeled.indices, k=dataset.k)
    return TrialOutcome(trial_index, seed, cm, class_metrics(cm), result.metadata(),
                        split.labeled.indices.tolist())


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    trials: list
    mean_metrics: dict
    sd_metrics: dict
    mean_confusion: np.ndarray
    diverged_count: int
    mean_iterations: float
    expanding_count: int

    @property
    def accuracy(self) -> float:
        return self.mean_metrics["accuracy"]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "per_trial": [t.to_dict() for t in self.trials],
            "mean_metrics": self.mean_metrics,
            "sd_metrics": self.sd_metrics,
            "mean_confusion": self.mean_confusion.tolist(),
            "diverged_count": self.diverged_count,
            "expanding_count": self.expanding_count,
            "mean_iterations": self.mean_iterations,
            "provenance": {"package": "graphssl", "version": __version__},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSummary":
        """Rebuild a summary from its JSON form; per-trial metrics are recomputed from the confusion counts."""
        cfg = ExperimentConfig.from_dict(data["config"])
        return cls(
            config=cfg,
            trials=[TrialOutcome.from_dict(t, cfg.scope) for t in data["per_trial"]],
            mean_metrics=dict(data["mean_metrics"]),
            sd_metrics=dict(data["sd_metrics"]),
            mean_confusion=np.asarray(data["mean_confusion"], dtype=float),
            diverged_count=data["diverged_count"],
            mean_iterations=data["mean_iterations"],
            expanding_count=data["expanding_count"],
        )

    def table_row(self, minority: int = 1) -> dict:
        """The seven imbalance-table columns, with ``minority`` as the positive class."""
        majority = 1 - minority if self.mean_confusion.shape[0] == 2 else 0
        m = self.mean_metrics
        return {
            "accuracy": m["accuracy"],
            "f1_min": m[f"f1_{minority}"],
            "f1_maj": m[f"f1_{majority}"],
            "recall_min": m[f"recall_{minority}"],
            "recall_maj": m[f"recall_{majority}"],
            "precision_min": m[f"precision_{minority}"],
            "precision_maj": m[f"precision_{majority}"],
        }


def _trial_job(args):
    cfg, index = args
    return run_trial(cfg, index)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentSummary:
    """Run every trial and aggregate the non-diverged ones.

    Trials are independent; with ``jobs > 1`` they run in worker processes and
    are put back in trial order before aggregation, so the summary is the same
    for any ``jobs``.
    """
    tasks = [(cfg, i) for i in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_trial_job, tasks))
    else:
        outcomes = [_trial_job(t) for t in tasks]
    outcomes.sort(key=lambda t: t.index)

    kept = [t for t in outcomes if not t.solver["diverged"]]
    if not kept:
        raise ExperimentError(f"all {cfg.trials} trials diverged")
    stats = aggregate((t.confusion, t.metrics) for t in kept)
    return ExperimentSummary(
        config=cfg,
        trials=outcomes,
        mean_metrics=stats.mean_metrics,
        sd_metrics=stats.sd_metrics,
        mean_confusion=stats.mean_confusion,
        diverged_count=len(outcomes) - len(kept),
        mean_iterations=float(np.mean([t.solver["iterations"] for t in outcomes])),
        expanding_count=sum(bool(t.solver["expanding"]) for t in outcomes),
    )


@dataclass
class SweepResult:
    points: list  # list of (overrides dict, ExperimentSummary)
    best: int

    def to_dict(self) -> dict:
        return {
            "best": self.best,
            "grid": [{"params": p, "summary": s.to_dict()} for p, s in self.points],
        }


def sweep(cfg: ExperimentConfig, grid: dict, cap: int = 256, jobs: int = 1) -> SweepResult:
    """Run one experiment per point of the Cartesian product of ``grid``.

    Keys are dotted config paths (``solver.max_iterations``) or the shorthands
    ``alpha1``/``alpha2``/``alpha3``. Points are visited in lexicographic order
    of the sorted keys; the best point has the highest mean accuracy, ties going
    to the earliest.
    """
    if not grid:
        raise ValueError("grid must not be empty")
    keys = sorted(grid)
    values = [list(grid[k]) for k in keys]
    size = int(np.prod([len(v) for v in values]))
    if size > cap:
        raise ValueError(f"grid has {size} points, more than the cap of {cap}")

    points = []
    for combo in itertools.product(*values):
        params = dict(zip(keys, combo))
        points.append((params, run_experiment(_apply_params(cfg, params), jobs=jobs)))
    accs = [s.accuracy for _, s in points]
    return SweepResult(points, int(np.argmax(accs)))


def _apply_params(cfg: ExperimentConfig, params: dict) -> ExperimentConfig:
    alphas = list(cfg.solver.alphas or DEFAULT_ALPHAS.get(cfg.solver.name, ()))
    dotted = {}
    for key, value in params.items():
        if key in ("alpha", "alpha1", "alpha2", "alpha3"):
            pos = 0 if key == "alpha" else int(key[-1]) - 1
            while len(alphas) <= pos:
                alphas.append(0.0)
            alphas[pos] = float(value)
        else:
            dotted[key] = value
    if alphas:
        dotted["solver.alphas"] = tuple(alphas)
    return cfg.with_overrides(**dotted)


def report_json(summary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"


def report_csv(summary: ExperimentSummary) -> str:
    buf = io.StringIO()
    metric_keys = sorted(summary.mean_metrics)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial", "seed", *metric_keys, "iterations", "converged", "diverged"])
    for t in summary.trials:
        m = t.metrics.as_dict()
        writer.writerow([t.index, t.seed, *(repr(m[k]) for k in metric_keys),
                         t.solver["iterations"], t.solver["converged"], t.solver["diverged"]])
    return buf.getvalue()


def report_text(summary: ExperimentSummary) -> str:
    cfg = summary.config
    lines = ["config:"]
    for section, value in cfg.to_dict().items():
        if isinstance(value, dict):
            for key, v in value.items():
                lines.append(f"  {section}.{key} = {v}")
        else:
            lines.append(f"  {section} = {value}")
    lines.append("")
    lines.append(f"trials: {len(summary.trials)}  diverged: {summary.diverged_count}  "
                 f"expanding: {summary.expanding_count}  mean iterations: {summary.mean_iterations:.1f}")
    lines.append("")
    if summary.mean_confusion.shape[0] == 2:
        header = " | ".join(f"{c:>13}" for c in METRIC_COLUMNS)
        row = summary.table_row()
        lines.append(f"{'method':<8} | {header}")
        lines.append(f"{cfg.solver.name:<8} | " + " | ".join(f"{row[c]:>13.4f}" for c in METRIC_COLUMNS))
    else:
        lines.append(f"{'method':<8} | {'accuracy':>9} | {'sd':>7}")
        lines.append(f"{cfg.solver.name:<8} | {100 * summary.accuracy:>9.3f} | "
                     f"{100 * summary.sd_metrics['accuracy']:>7.3f}")
    lines.append("")
    lines.append("mean confusion (rows = truth, columns = prediction):")
    for row in summary.mean_confusion:
        lines.append("  " + "  ".join(f"{v:10.2f}" for v in row))
    return "\n".join(lines) + "\n"


def accuracy_table(summaries: dict) -> str:
    """Method x labels-per-class grid of mean accuracies (percent).

    ``summaries`` maps (method, labels_per_class) to an ExperimentSummary.
    """
    methods = list(dict.fromkeys(m for m, _ in summaries))
    counts = sorted({c for _, c in summaries})
    lines = [f"{'labels per class':<18}" + "".join(f"{c:>10}" for c in counts)]
    for m in methods:
        cells = [f"{100 * summaries[(m, c)].accuracy:>10.3f}" if (m, c) in summaries else f"{'-':>10}"
                 for c in counts]
        lines.append(f"{m.upper():<18}" + "".join(cells))
    return "\n".join(lines) + "\n"


def emit_report(summary, path, fmt: str = "json") -> Path:
    path = Path(path)
    if fmt == "json":
        text = report_json(summary)
    elif fmt == "csv":
        text = report_csv(summary)
    elif fmt in ("table", "table-text", "text"):
        text = report_text(summary)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.write_text(text)
    return path


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def emit_scatter(dataset: LabeledDataset, predictions, labeled_indices, path, size: int = 480) -> tuple:
    """Write an SVG scatter of predicted classes plus a companion CSV.

    Labeled points are drawn again as black-edged squares. Returns the SVG and
    CSV paths.
    """
    X = dataset.cloud.points
    if X.shape[1] != 2:
        raise ValueError(f"scatter needs 2-D points, got d={X.shape[1]}; project the data first")
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    predictions = np.asarray(predictions)
    labeled = set(int(i) for i in labeled_indices)

    pad = 20
    lo = X.min(axis=0)
    span = np.where(X.max(axis=0) > lo, X.max(axis=0) - lo, 1.0)
    scale = (size - 2 * pad) / span.max()

    def xy(p):
        return pad + (p[0] - lo[0]) * scale, size - pad - (p[1] - lo[1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for i, p in enumerate(X):
        cx, cy = xy(p)
        color = _PALETTE[int(predictions[i]) % len(_PALETTE)]
        out.append(f'<circle class="point" cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="{color}"/>')
    for i in sorted(labeled):
        cx, cy = xy(X[i])
        out.append(f'<rect class="labeled" x="{cx - 4:.2f}" y="{cy - 4:.2f}" width="8" height="8" '
                   f'fill="none" stroke="black" stroke-width="1.5"/>')
    classes = sorted(set(int(c) for c in predictions))
    legend = ['<g class="legend">']
    for row, c in enumerate(classes):
        y = pad + 14 * row
        name = dataset.class_names[c] if c < len(dataset.class_names) else f"class {c}"
        legend.append(f'<circle cx="{size - 110}" cy="{y}" r="4" fill="{_PALETTE[c % len(_PALETTE)]}"/>'
                      f'<text x="{size - 100}" y="{y + 4}" font-size="11">{escape(name)}</text>')
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")

    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "truth", "prediction", "is_labeled"])
        for i, p in enumerate(X):
            writer.writerow([repr(float(p[0])), repr(float(p[1])), int(dataset.truth[i]),
                             int(predictions[i]), int(i in labeled)])
    return path, csv_path
