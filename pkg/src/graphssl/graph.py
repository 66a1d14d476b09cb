"""Affinity graphs and the operator family used by the propagation solvers.

Graphs are stored as scipy CSR matrices with sorted column indices. Every
value here is treated as immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

__all__ = [
    "GraphError",
    "PointCloud",
    "WeightedGraph",
    "GraphOperators",
    "build_knn_graph",
    "build_full_graph",
    "operators",
    "is_connected",
]

DEFAULT_WEIGHT_FLOOR = 1e-12


class GraphError(ValueError):
    """Raised for invalid graph input or graphs violating a solver precondition."""


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise GraphError(f"points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise GraphError("a point cloud needs at least 2 points")
        if pts.shape[1] < 1:
            raise GraphError("feature dimension must be at least 1")
        if not np.all(np.isfinite(pts)):
            raise GraphError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class WeightedGraph:
    """Sparse symmetric nonnegative affinity matrix with cached degrees."""

    weights: sparse.csr_matrix
    degrees: np.ndarray = field(init=False, repr=False)
    total_degree: float = field(init=False)

    def __post_init__(self):
        W = sparse.csr_matrix(self.weights, dtype=float, copy=True)
        if W.shape[0] != W.shape[1]:
            raise GraphError(f"weight matrix must be square, got {W.shape}")
        W.setdiag(0.0)
        W.eliminate_zeros()
        W.sort_indices()
        if W.nnz and W.data.min() < 0:
            raise GraphError("weights must be nonnegative")
        if (W != W.T).nnz:
            raise GraphError("weight matrix must be symmetric")
        deg = np.asarray(W.sum(axis=1)).ravel()
        if np.any(deg <= 0):
            raise GraphError(f"isolated node {int(np.flatnonzero(deg <= 0)[0])}")
        deg.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "degrees", deg)
        object.__setattr__(self, "total_degree", float(deg.sum()))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def permuted(self, perm) -> "WeightedGraph":
        """Graph with nodes reordered so that new node i is old node perm[i]."""
        perm = np.asarray(perm)
        return WeightedGraph(self.weights[perm][:, perm])


@dataclass(frozen=True)
class GraphOperators:
    """P = D^-1 W, S = D^-1/2 W D^-1/2, L = D - W and their stationary vectors.

    The rank-one limit Q (every row equal to ``pi_p``) is never formed; use
    :meth:`apply_q`. ``apply_g`` is the same construction with ``pi_s``.
    """

    graph: WeightedGraph
    random_walk: sparse.csr_matrix
    sym_normalized: sparse.csr_matrix
    laplacian: sparse.csr_matrix
    pi_p: np.ndarray
    pi_s: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def degrees(self) -> np.ndarray:
        return self.graph.degrees

    def apply_q(self, U):
        return _rank_one(self.pi_p, U)

    def apply_g(self, U):
        return _rank_one(self.pi_s, U)


def _rank_one(pi, U):
    U = np.asarray(U)
    row = pi @ U
    if U.ndim == 1:
        return np.full(U.shape, row)
    return np.broadcast_to(row, U.shape).copy()


def _as_cloud(cloud) -> PointCloud:
    return cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)


def build_knn_graph(cloud, k: int, sigma: float | None = None) -> WeightedGraph:
    """Gaussian k-nearest-neighbor graph.

    With ``sigma=None`` the bandwidth is local: sigma_i is the distance from
    x_i to its k-th neighbor, and the weight is exp(-|x_i - x_j|^2 / (2 sigma_i
    sigma_j)). A positive ``sigma`` uses that fixed bandwidth everywhere.
    Directed weights are symmetrized with an elementwise maximum.
    """
    cloud = _as_cloud(cloud)
    X, n = cloud.points, cloud.n
    if not 1 <= k < n:
        raise GraphError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    if sigma is not None and not sigma > 0:
        raise GraphError(f"sigma must be positive, got {sigma}")

    dist, idx = cKDTree(X).query(X, k=k + 1)
    # Coincident points can push self out of column 0; drop self wherever it
    # lands, otherwise drop the farthest candidate.
    rows = np.arange(n)
    is_self = idx == rows[:, None]
    drop = np.where(is_self.any(axis=1), is_self.argmax(axis=1), k)
    keep = np.ones_like(idx, dtype=bool)
    keep[rows, drop] = False
    dist = dist[keep].reshape(n, k)
    idx = idx[keep].reshape(n, k)

    if sigma is None:
        bw = dist[:, -1].copy()
        if np.any(bw == 0):
            positive = dist[dist > 0]
            if positive.size == 0:
                raise GraphError("all neighbor distances are zero; cannot set a local bandwidth")
            bw[bw == 0] = positive.min()
    else:
        bw = np.full(n, float(sigma))

    r = np.repeat(rows, k)
    c = idx.ravel()
    w = np.exp(-dist.ravel() ** 2 / (2.0 * bw[r] * bw[c]))
    W = sparse.csr_matrix((w, (r, c)), shape=(n, n))
    W = W.maximum(W.T)
    return WeightedGraph(W)


def build_full_graph(cloud, sigma: float, floor: float = DEFAULT_WEIGHT_FLOOR) -> WeightedGraph:
    """Dense Gaussian affinity exp(-|x_i - x_j|^2 / (2 sigma^2)); entries below ``floor`` are dropped."""
    if not sigma > 0:
        raise GraphError(f"sigma must be positive, got {sigma}")
    cloud = _as_cloud(cloud)
    W = np.exp(cdist(cloud.points, cloud.points, "sqeuclidean") / (-2.0 * sigma * sigma))
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    W[W < floor] = 0.0
    return WeightedGraph(sparse.csr_matrix(W))


def is_connected(graph: WeightedGraph) -> bool:
    order = breadth_first_order(graph.weights, 0, directed=False, return_predecessors=False)
    return order.size == graph.n


def operators(graph: WeightedGraph, tol: float = 1e-12, max_iter: int = 10_000) -> GraphOperators:
    if not is_connected(graph):
        raise GraphError("graph not connected")
    W = graph.weights
    d = graph.degrees
    inv_d = sparse.diags(1.0 / d)
    inv_sqrt_d = sparse.diags(1.0 / np.sqrt(d))
    P = (inv_d @ W).tocsr()
    S = (inv_sqrt_d @ W @ inv_sqrt_d).tocsr()
    S = ((S + S.T) * 0.5).tocsr()
    L = (sparse.diags(d) - W).tocsr()
    for M in (P, S, L):
        M.sort_indices()

    pi_p = d / graph.total_degree
    pi_s = _left_fixed_vector(S, np.sqrt(d), tol, max_iter)
    for v in (pi_p, pi_s):
        v.setflags(write=False)
    return GraphOperators(graph, P, S, L, pi_p, pi_s)


def _left_fixed_vector(M, start, tol, max_iter):
    # Lazy power iteration x <- x (I + M) / 2, so a bipartite spectrum
    # (eigenvalue -1) cannot make it oscillate.
    x = start / start.sum()
    MT = M.T.tocsr()
    for _ in range(max_iter):
        nxt = 0.5 * (x + MT @ x)
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - x)) < tol:
            return nxt
        x = nxt
    raise GraphError("power iteration for the stationary vector did not converge")
