"""Graph-based semi-supervised classification at very low label rates."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    GraphError,
    GraphOperators,
    PointCloud,
    WeightedGraph,
    build_full_graph,
    build_knn_graph,
    is_connected,
    operators,
)
from .propagation import (  # noqa: E402
    LabelSet,
    PropagationResult,
    SolverConfig,
    decode,
    grf_closed_form,
    igrf,
    ipl,
    mgrf,
    poisson_learning,
    solve,
)

__all__ = [
    "GraphError",
    "GraphOperators",
    "PointCloud",
    "WeightedGraph",
    "build_full_graph",
    "build_knn_graph",
    "is_connected",
    "operators",
    "LabelSet",
    "PropagationResult",
    "SolverConfig",
    "decode",
    "grf_closed_form",
    "igrf",
    "ipl",
    "mgrf",
    "poisson_learning",
    "solve",
]
