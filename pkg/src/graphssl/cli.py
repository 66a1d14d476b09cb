"""Command-line front end: generate, graph, solve, bench, sweep, report.

Every option can also be set in a flat ``key = value`` config file passed with
``--config``; keys are the long flag names without the leading dashes. A flag
on the command line beats the config file, which beats the built-in default.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .datasets import DatasetError
from .graph import GraphError, is_connected
from .harness import (
    DatasetSpec,
    ExperimentConfig,
    ExperimentError,
    ExperimentSummary,
    GraphSpec,
    SamplingPlan,
    SolverSpec,
    accuracy_table,
    build_graph,
    emit_scatter,
    load_dataset,
    report_csv,
    report_json,
    report_text,
    run_experiment,
    solve_trial,
    sweep,
)
from .metrics import class_metrics, confusion
from .propagation import DEFAULT_ALPHAS, SOLVERS, LabelError

OUTPUT_DIR_ENV = "GRAPHSSL_OUTPUT_DIR"

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class UsageError(Exception):
    pass


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    return tuple(float(x) for x in str(text).split(","))


def _names(text):
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in str(text).split(","))


@dataclass(frozen=True)
class Option:
    name: str
    type: object
    default: object
    help: str
    choices: tuple = ()


DATA_OPTIONS = (
    Option("dataset", str, "two-moons", "dataset source", ("two-moons", "two-circles", "csv", "embedding")),
    Option("n", int, 1000, "total number of synthetic points"),
    Option("n-minor", int, None, "points in the minority class (default: half of --n)"),
    Option("noise", float, 0.15, "Gaussian noise level of synthetic data"),
    Option("radius-ratio", float, 0.5, "inner circle radius for two-circles"),
    Option("path", str, "", "feature file for csv/embedding datasets"),
    Option("label-column", str, "-1", "label column: zero-based index or header name"),
    Option("delimiter", str, ",", "field delimiter of the feature file"),
    Option("standardize", _bool, True, "standardize csv feature columns"),
    Option("seed", int, 0, "base seed; trial i uses seed + i"),
)

GRAPH_OPTIONS = (
    Option("graph", str, "knn", "graph construction", ("knn", "full")),
    Option("k", int, 10, "neighbors per node for knn graphs"),
    Option("sigma", float, 0.0, "Gaussian bandwidth; 0 selects local scaling (knn only)"),
)

SOLVER_OPTIONS = (
    Option("solver", _names, ("igrf",), "solver name, or a comma list for bench"),
    Option("alpha1", float, None, "first solver parameter (alpha for mgrf)"),
    Option("alpha2", float, None, "second solver parameter"),
    Option("alpha3", float, None, "third solver parameter"),
    Option("tolerance", float, 1e-8, "stop when the update norm falls below this"),
    Option("max-iterations", int, 1500, "iteration cap"),
    Option("class-priors", _floats, None, "comma list of class priors for poisson"),
    Option("divergence", str, "continue", "policy for growing iterations", ("continue", "stop")),
    Option("stationary", str, "sym", "stationary vector for igrf", ("sym", "walk")),
    Option("labels-per-class", _ints, (3,), "labels drawn per class, or a comma list for bench"),
    Option("label-fraction", float, None, "fraction of each class to label instead of a fixed count"),
    Option("ir-proportional", _bool, True, "with --label-fraction, allocate labels by class size"),
    Option("scope", str, "all", "nodes scored by the metrics", ("all", "unlabeled")),
)

RUN_OPTIONS = (
    Option("trials", int, 1, "number of independent trials"),
    Option("jobs", int, 1, "worker processes for trials"),
)

OUT_OPTIONS = (
    Option("out", str, None, f"output file (default: stdout, or ${OUTPUT_DIR_ENV}/<command>.<ext> when set)"),
    Option("format", str, None, "report format (default: from --out suffix, else json)",
           ("json", "csv", "table-text")),
)

COMMANDS = {
    "generate": ("write a synthetic dataset as CSV", DATA_OPTIONS + OUT_OPTIONS[:1]),
    "graph": ("build a graph and print its statistics; --out writes an edge list",
              DATA_OPTIONS + GRAPH_OPTIONS + OUT_OPTIONS[:1]),
    "solve": ("run one trial and print its metrics",
              DATA_OPTIONS + GRAPH_OPTIONS + SOLVER_OPTIONS + OUT_OPTIONS
              + (Option("scatter", str, None, "also write an SVG scatter (2-D data only)"),)),
    "bench": ("run repeated trials and write a report",
              DATA_OPTIONS + GRAPH_OPTIONS + SOLVER_OPTIONS + RUN_OPTIONS + OUT_OPTIONS),
    "sweep": ("run one experiment per grid point",
              DATA_OPTIONS + GRAPH_OPTIONS + SOLVER_OPTIONS + RUN_OPTIONS + OUT_OPTIONS[:1]
              + (Option("grid", str, (), "KEY=V1,V2,... (repeatable); keys are option names"),
                 Option("cap", int, 256, "largest grid allowed"))),
    "report": ("render a saved JSON report in another format",
               (Option("input", str, None, "JSON report written by bench"),) + OUT_OPTIONS),
}

# option name -> dotted config path, for sweep grids
SWEEPABLE = {
    "alpha1": "alpha1",
    "alpha2": "alpha2",
    "alpha3": "alpha3",
    "k": "graph.k",
    "sigma": "graph.sigma",
    "noise": "dataset.noise",
    "n-minor": "dataset.n_minor",
    "tolerance": "solver.tolerance",
    "max-iterations": "solver.max_iterations",
    "labels-per-class": "sampling.per_class",
    "label-fraction": "sampling.fraction",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphssl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (help_text, options) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=argparse.SUPPRESS,
                       help="flat key = value file supplying defaults for any option")
        for opt in options:
            text = opt.help if "default" in opt.help else f"{opt.help} (default: {_show(opt.default)})"
            kw = {"default": argparse.SUPPRESS, "help": text,
                  "metavar": opt.name.replace("-", "_").upper()}
            if opt.choices:
                kw["choices"] = opt.choices
                kw.pop("metavar")
            if opt.name == "grid":
                kw["action"] = "append"
            else:
                kw["type"] = opt.type
            p.add_argument(f"--{opt.name}", **kw)
    return parser


def _show(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value) or "none"
    return "none" if value is None else value


def read_config_file(path, options) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are usage errors."""
    known = {o.name: o for o in options}
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lstrip("-").replace("_", "-")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown option {key!r}")
        opt = known[key]
        value = value.strip()
        try:
            if opt.name == "grid":
                out.setdefault("grid", []).append(value)
                continue
            converted = opt.type(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
        if opt.choices and converted not in opt.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {', '.join(opt.choices)}")
        out[key] = converted
    return out


def resolve(command: str, given: dict) -> dict:
    """Merge built-in defaults, the config file and command-line flags, in rising priority."""
    options = COMMANDS[command][1]
    effective = {o.name: o.default for o in options}
    if "config" in given:
        effective.update(read_config_file(given["config"], options))
    effective.update({k.replace("_", "-"): v for k, v in given.items() if k not in ("command", "config")})
    return effective


def experiment_config(eff: dict, solver: str | None = None, per_class: int | None = None) -> ExperimentConfig:
    """Translate effective options into an ExperimentConfig (one solver, one label count)."""
    solver = solver or eff["solver"][0]
    if solver not in SOLVERS:
        raise UsageError(f"unknown solver {solver!r}; choose from {', '.join(sorted(SOLVERS))}")
    n = eff["n"]
    n_minor = eff["n-minor"] if eff["n-minor"] is not None else n // 2
    if not 1 <= n_minor < n:
        raise UsageError(f"--n-minor must lie in [1, {n - 1}]")
    if eff["dataset"] in ("csv", "embedding") and not eff["path"]:
        raise UsageError(f"--dataset {eff['dataset']} needs --path")

    given = [eff["alpha1"], eff["alpha2"], eff["alpha3"]]
    alphas = ()
    if any(a is not None for a in given):
        base = list(DEFAULT_ALPHAS.get(solver, ()))
        width = max(len(base), max(i + 1 for i, a in enumerate(given) if a is not None))
        base += [0.0] * (width - len(base))
        alphas = tuple(a if a is not None else b for a, b in zip(given + [None] * width, base))

    if eff["label-fraction"] is not None:
        sampling = SamplingPlan(fraction=eff["label-fraction"], ir_proportional=eff["ir-proportional"])
    else:
        sampling = SamplingPlan(per_class=per_class or eff["labels-per-class"][0])

    try:
        return ExperimentConfig(
            dataset=DatasetSpec(
                kind=eff["dataset"], n_major=n - n_minor, n_minor=n_minor, noise=eff["noise"],
                radius_ratio=eff["radius-ratio"], path=eff["path"], label_column=eff["label-column"],
                delimiter=eff["delimiter"], standardize=eff["standardize"],
            ),
            graph=GraphSpec(kind=eff["graph"], k=eff["k"], sigma=eff["sigma"]),
            solver=SolverSpec(
                name=solver, alphas=alphas, tolerance=eff["tolerance"], max_iterations=eff["max-iterations"],
                class_priors=eff["class-priors"], divergence=eff["divergence"], stationary=eff["stationary"],
            ),
            sampling=sampling,
            trials=eff.get("trials", 1),
            base_seed=eff["seed"],
            scope=eff["scope"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_effective(command, eff):
    print(f"# graphssl {command}: effective configuration", file=sys.stderr)
    for key in sorted(eff):
        print(f"#   {key} = {_show(eff[key])}", file=sys.stderr)


def _output_path(eff, command, ext):
    if eff.get("out"):
        return Path(eff["out"])
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base:
        return Path(base) / f"{command}.{ext}"
    return None


def _format(eff):
    if eff.get("format"):
        return eff["format"]
    suffix = Path(eff["out"]).suffix.lower() if eff.get("out") else ""
    return {".csv": "csv", ".txt": "table-text"}.get(suffix, "json")


_EXT = {"json": "json", "csv": "csv", "table-text": "txt"}


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    print(f"wrote {path}", file=sys.stderr)


def cmd_generate(eff):
    if eff["dataset"] not in ("two-moons", "two-circles"):
        raise UsageError("generate only produces synthetic datasets (two-moons, two-circles)")
    cfg = experiment_config({**_solver_defaults(), **eff})
    data = load_dataset(cfg.dataset, seed=cfg.base_seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*(f"x{j}" for j in range(data.p)), "label"])
    for point, label in zip(data.cloud.points, data.truth):
        writer.writerow([*(repr(float(v)) for v in point), data.class_names[label]])
    _emit(buf.getvalue(), _output_path(eff, "generate", "csv"))
    print(json.dumps(data.manifest(), sort_keys=True), file=sys.stderr)


def _solver_defaults():
    return {o.name: o.default for o in GRAPH_OPTIONS + SOLVER_OPTIONS}


def cmd_graph(eff):
    cfg = experiment_config({**_solver_defaults(), **eff})
    data = load_dataset(cfg.dataset, seed=cfg.base_seed)
    g = build_graph(data, cfg.graph)
    W = g.weights.tocoo()
    stats = {
        "n": g.n,
        "edges": int(g.weights.nnz // 2),
        "connected": bool(is_connected(g)),
        "min_degree": float(g.degrees.min()),
        "max_degree": float(g.degrees.max()),
        "total_degree": float(g.total_degree),
    }
    print(json.dumps(stats, sort_keys=True))
    path = _output_path(eff, "graph", "csv")
    if path is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "j", "weight"])
        for i, j, w in sorted(zip(W.row.tolist(), W.col.tolist(), W.data.tolist())):
            if i < j:
                writer.writerow([i, j, repr(w)])
        _emit(buf.getvalue(), path)


def cmd_solve(eff):
    cfg = experiment_config(eff)
    dataset, split, result, _ = solve_trial(cfg, 0)
    cm = confusion(dataset.truth, result.predictions, cfg.scope, split.labeled.indices, k=dataset.k)
    metrics = class_metrics(cm)
    out = {
        "solver": cfg.solver.name,
        "metrics": metrics.as_dict(),
        "confusion": cm.counts.tolist(),
        **{k: v for k, v in result.metadata().items()},
    }
    if eff["scatter"]:
        emit_scatter(dataset, result.predictions, split.labeled.indices, eff["scatter"])
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    path = _output_path(eff, "solve", "json")
    if path is None:
        print(f"accuracy {100 * metrics.accuracy:.3f}  iterations {result.iterations}  "
              f"converged {result.converged}  expanding {result.expanding}")
    else:
        _emit(text, path)


def _render(summary: ExperimentSummary, fmt: str) -> str:
    if fmt == "json":
        return report_json(summary)
    if fmt == "csv":
        return report_csv(summary)
    return report_text(summary)


def cmd_bench(eff):
    fmt = _format(eff)
    solvers, counts = eff["solver"], eff["labels-per-class"]
    if eff["label-fraction"] is not None:
        counts = (None,)
    runs = []
    for name in solvers:
        for c in counts:
            runs.append((name, c, experiment_config(eff, solver=name, per_class=c)))
    summaries = [(name, c, run_experiment(cfg, jobs=eff["jobs"])) for name, c, cfg in runs]

    if len(summaries) == 1:
        text = _render(summaries[0][2], fmt)
    elif fmt == "json":
        payload = {"runs": [{"solver": n, "labels_per_class": c, "summary": s.to_dict()} for n, c, s in summaries]}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        parts = []
        for i, (n, c, s) in enumerate(summaries):
            body = report_csv(s).splitlines()
            rows = body if i == 0 else body[1:]
            parts += [("solver,labels_per_class," if j == 0 and i == 0 else f"{n},{c},") + r
                      for j, r in enumerate(rows)]
        text = "\n".join(parts) + "\n"
    else:
        text = accuracy_table({(n, c): s for n, c, s in summaries}) + "\n"
        text += "\n".join(report_text(s) for _, _, s in summaries)
    _emit(text, _output_path(eff, "bench", _EXT[fmt]))
    for n, c, s in summaries:
        print(f"{n} labels={c}: accuracy {100 * s.accuracy:.3f} (sd {100 * s.sd_metrics['accuracy']:.3f}), "
              f"diverged {s.diverged_count}/{len(s.trials)}", file=sys.stderr)
    return summaries


def parse_grid(entries) -> dict:
    grid = {}
    for entry in entries:
        key, sep, values = entry.partition("=")
        key = key.strip().lstrip("-")
        if not sep or not values.strip():
            raise UsageError(f"grid entry {entry!r} must look like KEY=V1,V2")
        if key not in SWEEPABLE:
            raise UsageError(f"cannot sweep {key!r}; choose from {', '.join(sorted(SWEEPABLE))}")
        cast = int if key in ("k", "n-minor", "max-iterations", "labels-per-class") else float
        try:
            grid[SWEEPABLE[key]] = [cast(v) for v in values.split(",")]
        except ValueError as exc:
            raise UsageError(f"grid entry {entry!r}: {exc}") from None
    return grid


def cmd_sweep(eff):
    grid = parse_grid(eff["grid"])
    if not grid:
        raise UsageError("sweep needs at least one --grid entry")
    size = 1
    for values in grid.values():
        size *= len(values)
    if size > eff["cap"]:
        raise UsageError(f"grid has {size} points, more than --cap {eff['cap']}")
    result = sweep(experiment_config(eff), grid, cap=eff["cap"], jobs=eff["jobs"])
    _emit(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", _output_path(eff, "sweep", "json"))
    for i, (params, s) in enumerate(result.points):
        mark = "*" if i == result.best else " "
        print(f"{mark} {params}: accuracy {100 * s.accuracy:.3f}", file=sys.stderr)


def cmd_report(eff):
    if not eff["input"]:
        raise UsageError("report needs --input")
    try:
        data = json.loads(Path(eff["input"]).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{eff['input']}: not a JSON report ({exc})") from None
    fmt = _format(eff)
    if "runs" in data:
        summaries = {(r["solver"], r["labels_per_class"]): ExperimentSummary.from_dict(r["summary"])
                     for r in data["runs"]}
        if fmt == "table-text":
            text = accuracy_table(summaries) + "\n" + "\n".join(report_text(s) for s in summaries.values())
        else:
            raise UsageError("multi-run reports can only be rendered as table-text")
    else:
        text = _render(ExperimentSummary.from_dict(data), fmt)
    _emit(text, _output_path(eff, "report", _EXT[fmt]))


HANDLERS = {
    "generate": cmd_generate,
    "graph": cmd_graph,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        eff = resolve(args.command, vars(args))
        _print_effective(args.command, eff)
        HANDLERS[args.command](eff)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE_ERROR
    except (ExperimentError, DatasetError, GraphError, LabelError, OSError) as exc:
        print(f"graphssl: error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
