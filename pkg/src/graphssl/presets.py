"""Named experiment configurations for the published benchmark runs.

The source tables do not state how the graphs were built, so the graph for
each method below is a recorded choice. It was picked on tuning seeds
1000 and up, and the presets evaluate on base seed 0.
"""

from __future__ import annotations

from .harness import DatasetSpec, ExperimentConfig, GraphSpec, SamplingPlan, SolverSpec

# Balanced two-moons, 1000 points, noise 0.15.
TABLE1_GRAPHS = {
    "igrf": GraphSpec("knn", k=15, sigma=0.05),
    "ipl": GraphSpec("knn", k=10, sigma=0.07),
    "poisson": GraphSpec("knn", k=10, sigma=0.12),
}

EXAMPLE2_GRAPH = TABLE1_GRAPHS["igrf"]
EXAMPLE3_GRAPH = GraphSpec("knn", k=10, sigma=0.05)
EXAMPLE3_RADIUS_RATIO = 0.5

EMBEDDING_GRAPH = GraphSpec("knn", k=10)


def table1(solver: str, labels_per_class: int, trials: int = 100, base_seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=DatasetSpec("two-moons", n_major=500, n_minor=500, noise=0.15),
        graph=TABLE1_GRAPHS[solver],
        solver=SolverSpec(solver),
        sampling=SamplingPlan(per_class=labels_per_class),
        trials=trials,
        base_seed=base_seed,
    )


def example2(trials: int = 100, base_seed: int = 0) -> ExperimentConfig:
    """Imbalanced moons (950/50), IGRF, two labels per class."""
    return ExperimentConfig(
        dataset=DatasetSpec("two-moons", n_major=950, n_minor=50, noise=0.15),
        graph=EXAMPLE2_GRAPH,
        solver=SolverSpec("igrf"),
        sampling=SamplingPlan(per_class=2),
        trials=trials,
        base_seed=base_seed,
    )


def example3(trials: int = 100, base_seed: int = 0) -> ExperimentConfig:
    """Two circles (1000/100), MGRF with alpha 0.985, three labels per class."""
    return ExperimentConfig(
        dataset=DatasetSpec("two-circles", n_major=1000, n_minor=100, noise=0.1,
                            radius_ratio=EXAMPLE3_RADIUS_RATIO),
        graph=EXAMPLE3_GRAPH,
        solver=SolverSpec("mgrf", alphas=(0.985,), tolerance=1e-8, max_iterations=1500),
        sampling=SamplingPlan(per_class=3),
        trials=trials,
        base_seed=base_seed,
    )


def embedding_ipl(path: str, labels_per_class: int, trials: int = 10, base_seed: int = 0) -> ExperimentConfig:
    """IPL on a precomputed feature file (fixed features, labels redrawn per trial)."""
    return ExperimentConfig(
        dataset=DatasetSpec("embedding", path=path),
        graph=EMBEDDING_GRAPH,
        solver=SolverSpec("ipl"),
        sampling=SamplingPlan(per_class=labels_per_class),
        trials=trials,
        base_seed=base_seed,
    )


PRESETS = {
    **{f"table1-{name}": name for name in TABLE1_GRAPHS},
    "example2": "example2",
    "example3": "example3",
}
