"""Label propagation solvers over :class:`~graphssl.graph.GraphOperators`.

Five schemes share one fixed-point driver:

=========  ==========================================================  =========
name       update                                                      labels
=========  ==========================================================  =========
``grf``    harmonic extension, (I - P_uu) U_u = P_ul U_l (linear solve)  any k
``mgrf``   U <- a S U + (1 - a) D^-1/2 B                                binary
``igrf``   U <- (a1 S - a2 G + a3 I) U + (1 - a1) D^-1/2 B              binary
``poisson``U <- U + D^-1 (B - L U), started from zero                   any k
``ipl``    U <- (P - a1 Q + a2 I) U + a3 D^-1 B                         any k
=========  ==========================================================  =========

Q and G are rank-one: every row equals the stationary vector of P (d_i / d)
or of S (proportional to sqrt(d_i)).

Class indices are zero-based. In binary mode class 0 carries the sign +1 and
class 1 the sign -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import cg

from .graph import GraphOperators

__all__ = [
    "LabelError",
    "LabelSet",
    "SourceVector",
    "SolverConfig",
    "PropagationResult",
    "DEFAULT_ALPHAS",
    "SOLVERS",
    "build_source_vector",
    "decode",
    "grf_closed_form",
    "mgrf",
    "igrf",
    "poisson_learning",
    "ipl",
    "solve",
]

DEFAULT_ALPHAS = {
    "grf": (),
    "mgrf": (0.985,),
    "igrf": (0.99, 0.005, 0.05),
    "poisson": (),
    "ipl": (0.001, 0.02, 1.0),
}

# Rescale by an exact power of two once the iterate gets this large, so an
# expanding iteration never overflows and stays bit-equivalent up to scale.
_RESCALE_ABOVE = 2.0**400


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSet:
    """Labeled node indices with their zero-based class assignments."""

    indices: np.ndarray
    classes: np.ndarray
    k: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        cls = np.asarray(self.classes, dtype=np.int64).ravel()
        if idx.shape != cls.shape:
            raise LabelError("indices and classes must have the same length")
        if self.k < 2:
            raise LabelError(f"need at least 2 classes, got k={self.k}")
        if np.unique(idx).size != idx.size:
            raise LabelError("labeled indices must be distinct")
        if idx.size and idx.min() < 0:
            raise LabelError("labeled indices must be nonnegative")
        if cls.size and (cls.min() < 0 or cls.max() >= self.k):
            raise LabelError(f"class assignments must lie in [0, {self.k})")
        missing = sorted(set(range(self.k)) - set(cls.tolist()))
        if missing:
            raise LabelError(f"classes without any label: {missing}")
        idx.setflags(write=False)
        cls.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "classes", cls)

    @classmethod
    def from_signs(cls, indices, signs) -> "LabelSet":
        signs = np.asarray(signs)
        if not np.all(np.isin(signs, (-1, 1))):
            raise LabelError("binary labels must be +1 or -1")
        return cls(indices, np.where(signs > 0, 0, 1), 2)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.classes, minlength=self.k)

    @property
    def is_binary(self) -> bool:
        return self.k == 2

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.classes == 0, 1.0, -1.0)

    def check_nodes(self, n: int) -> None:
        if self.indices.size and self.indices.max() >= n:
            raise LabelError(f"labeled index {int(self.indices.max())} out of range for n={n}")

    def onehot(self, n: int) -> np.ndarray:
        """n x k matrix with the one-hot label at labeled rows and zeros elsewhere."""
        self.check_nodes(n)
        Y = np.zeros((n, self.k))
        Y[self.indices, self.classes] = 1.0
        return Y

    def sign_vector(self, n: int) -> np.ndarray:
        self.check_nodes(n)
        y = np.zeros(n)
        y[self.indices] = self.signs
        return y

    def permuted(self, perm) -> "LabelSet":
        """Labels after reordering nodes so that new node i is old node perm[i]."""
        inverse = np.empty(len(perm), dtype=np.int64)
        inverse[np.asarray(perm)] = np.arange(len(perm))
        return LabelSet(inverse[self.indices], self.classes, self.k)


@dataclass(frozen=True)
class SourceVector:
    values: np.ndarray
    mode: str


def build_source_vector(labels: LabelSet, n: int, mode: str = "multiclass") -> SourceVector:
    """Zero-sum source mass at the labeled nodes.

    Binary: l2/l at +1 nodes and -l1/l at -1 nodes, where l1 and l2 count the
    +1 and -1 labels. Multiclass: row i is y_i - mean(y) for labeled i.
    """
    labels.check_nodes(n)
    if mode == "binary":
        if not labels.is_binary:
            raise LabelError(f"binary source needs exactly 2 classes, got k={labels.k}")
        l1, l2 = labels.counts
        total = labels.size
        B = np.zeros(n)
        B[labels.indices] = np.where(labels.classes == 0, l2 / total, -l1 / total)
    elif mode == "multiclass":
        Y = np.eye(labels.k)[labels.classes]
        B = np.zeros((n, labels.k))
        B[labels.indices] = Y - Y.mean(axis=0)
    else:
        raise ValueError(f"unknown source mode {mode!r}")
    B.setflags(write=False)
    return SourceVector(B, mode)


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``alphas`` falls back to :data:`DEFAULT_ALPHAS` for the solver when empty.
    ``divergence`` decides what happens when the residual grows for
    ``patience`` consecutive steps: ``"continue"`` keeps iterating (decoding
    is scale invariant, so an expanding iteration still yields labels) and only
    marks the result as expanding; ``"stop"`` aborts, flags the result as
    diverged and returns the iterate with the smallest residual.
    ``stationary`` picks the vector behind the IGRF rank-one term: ``"sym"``
    (left fixed vector of S) or ``"walk"`` (d_i / d).
    """

    alphas: tuple = ()
    tolerance: float = 1e-8
    max_iterations: int = 1500
    class_priors: tuple | None = None
    divergence: str = "continue"
    patience: int = 25
    stationary: str = "sym"

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.divergence not in ("continue", "stop"):
            raise ValueError(f"divergence must be 'continue' or 'stop', got {self.divergence!r}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.stationary not in ("sym", "walk"):
            raise ValueError(f"stationary must be 'sym' or 'walk', got {self.stationary!r}")
        if self.class_priors is not None:
            b = tuple(float(x) for x in self.class_priors)
            if any(x <= 0 for x in b) or abs(sum(b) - 1.0) > 1e-9:
                raise ValueError("class priors must be positive and sum to 1")
            object.__setattr__(self, "class_priors", b)

    def resolved_alphas(self, solver: str) -> tuple:
        return self.alphas or DEFAULT_ALPHAS[solver]


@dataclass
class PropagationResult:
    scores: np.ndarray
    predictions: np.ndarray
    iterations: int
    converged: bool
    final_residual: float
    diverged: bool = False
    expanding: bool = False
    residuals: list = field(default_factory=list, repr=False)

    def metadata(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "diverged": self.diverged,
            "expanding": self.expanding,
            "final_residual": self.final_residual,
        }


def decode(scores, mode: str = "argmax") -> np.ndarray:
    """``sign``: +1 for scores >= 0, else -1. ``argmax``: lowest index among row maxima."""
    scores = np.asarray(scores)
    if mode == "sign":
        return np.where(scores >= 0, 1, -1)
    if mode == "argmax":
        return np.argmax(scores, axis=1)
    raise ValueError(f"unknown decode mode {mode!r}")


_DENSE_FALLBACK = 2000


def _signs_to_classes(signs):
    return np.where(signs > 0, 0, 1)


def _iterate(step, U0, source, cfg: SolverConfig):
    """Run U <- step(U) + source until the step norm drops to the tolerance.

    Returns (U, iterations, converged, diverged, expanding, residual history).
    """
    U = np.array(U0, dtype=float)
    src = np.array(source, dtype=float)
    shift = 0
    history = []
    best_res, best_U = math.inf, U
    prev = math.inf
    rising = 0
    expanding = False

    for m in range(1, cfg.max_iterations + 1):
        nxt = step(U) + src
        if not np.all(np.isfinite(nxt)):
            return best_U, m, False, True, expanding, history
        try:
            res = math.ldexp(float(np.linalg.norm(nxt - U)), shift)
        except OverflowError:
            res = math.inf  # the unscaled iterate no longer fits in a float
        history.append(res)
        U = nxt

        if res < best_res:
            best_res, best_U = res, U
        if res <= cfg.tolerance:
            return U, m, True, False, expanding, history

        rising = rising + 1 if res > prev else 0
        prev = res
        if rising >= cfg.patience:
            if cfg.divergence == "stop":
                return best_U, m, False, True, True, history
            expanding = True

        peak = float(np.max(np.abs(U)))
        if peak > _RESCALE_ABOVE:
            e = math.frexp(peak)[1]
            U = np.ldexp(U, -e)
            src = np.ldexp(src, -e)
            shift += e
            best_U = U if best_U is nxt else best_U

    return U, cfg.max_iterations, False, False, expanding, history


def _result(U, meta, predictions) -> PropagationResult:
    U_final, iterations, converged, diverged, expanding, history = meta
    return PropagationResult(
        scores=U,
        predictions=predictions,
        iterations=iterations,
        converged=converged,
        final_residual=history[-1] if history else 0.0,
        diverged=diverged,
        expanding=expanding,
        residuals=history,
    )


def _require_binary(labels: LabelSet, name: str):
    if not labels.is_binary:
        raise LabelError(f"{name} supports binary labels only, got k={labels.k}")


def _check_unit_interval(value, name, closed_right=False):
    ok = 0 < value <= 1 if closed_right else 0 < value < 1
    if not ok:
        bound = "(0, 1]" if closed_right else "(0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {value}")


def grf_closed_form(ops: GraphOperators, labels: LabelSet, cfg: SolverConfig | None = None) -> PropagationResult:
    """Harmonic extension of one-hot labels.

    The unlabeled block solves (D_uu - W_uu) U_u = W_ul Y_l, which is the
    random-walk system (I - P_uu) U_u = P_ul Y_l scaled row-wise by D_uu and is
    symmetric positive definite on a connected graph, so conjugate gradients
    apply.
    """
    cfg = cfg or SolverConfig()
    n = ops.n
    Y = labels.onehot(n)
    unlabeled = np.setdiff1d(np.arange(n), labels.indices)
    U = Y.copy()
    if unlabeled.size == 0:
        return PropagationResult(U, decode(U), 0, True, 0.0)

    W = ops.graph.weights
    A = ops.laplacian[unlabeled][:, unlabeled].tocsr()
    rhs = W[unlabeled][:, labels.indices] @ Y[labels.indices]

    iterations = 0
    converged = True
    residual = 0.0
    for j in range(labels.k):
        b = np.asarray(rhs[:, j]).ravel()
        if not np.any(b):
            continue
        count = [0]

        def _tick(_x, count=count):
            count[0] += 1

        x, info = cg(A, b, rtol=0.0, atol=cfg.tolerance * max(1.0, np.linalg.norm(b)),
                     maxiter=cfg.max_iterations * 10, callback=_tick)
        if info != 0 and A.shape[0] <= _DENSE_FALLBACK:
            x, info = np.linalg.solve(A.toarray(), b), 0
        U[unlabeled, j] = x
        iterations = max(iterations, count[0])
        converged = converged and info == 0
        residual = max(residual, float(np.linalg.norm(A @ x - b)))
    return PropagationResult(U, decode(U), iterations, converged, residual)


def mgrf(ops: GraphOperators, labels: LabelSet, cfg: SolverConfig | None = None) -> PropagationResult:
    cfg = cfg or SolverConfig()
    _require_binary(labels, "mgrf")
    (alpha,) = cfg.resolved_alphas("mgrf")[:1]
    _check_unit_interval(alpha, "alpha")
    d = ops.degrees
    S = ops.sym_normalized
    B = build_source_vector(labels, ops.n, "binary").values
    U0 = labels.sign_vector(ops.n) / d
    meta = _iterate(lambda U: alpha * (S @ U), U0, (1 - alpha) * B / np.sqrt(d), cfg)
    U = meta[0]
    return _result(U, meta, _signs_to_classes(decode(U, "sign")))


def igrf(ops: GraphOperators, labels: LabelSet, cfg: SolverConfig | None = None) -> PropagationResult:
    cfg = cfg or SolverConfig()
    _require_binary(labels, "igrf")
    a1, a2, a3 = cfg.resolved_alphas("igrf")
    _check_unit_interval(a1, "alpha1", closed_right=True)
    if a2 < 0 or a3 < 0:
        raise ValueError("alpha2 and alpha3 must be nonnegative")
    d = ops.degrees
    S = ops.sym_normalized
    pi = ops.pi_s if cfg.stationary == "sym" else ops.pi_p
    B = build_source_vector(labels, ops.n, "binary").values
    U0 = labels.sign_vector(ops.n) / d

    def step(U):
        return a1 * (S @ U) - a2 * (pi @ U) + a3 * U

    meta = _iterate(step, U0, (1 - a1) * B / np.sqrt(d), cfg)
    U = meta[0]
    return _result(U, meta, _signs_to_classes(decode(U, "sign")))


def poisson_learning(ops: GraphOperators, labels: LabelSet, cfg: SolverConfig | None = None) -> PropagationResult:
    """Poisson learning: U <- U + D^-1 (B - L U) from U = 0, at most max_iterations steps.

    With ``class_priors`` b the final scores are rescaled column-wise by b / mean(y).
    """
    cfg = cfg or SolverConfig()
    d = ops.degrees
    L = ops.laplacian
    B = build_source_vector(labels, ops.n, "multiclass").values
    inv_d = (1.0 / d)[:, None]
    U0 = np.zeros((ops.n, labels.k))
    meta = _iterate(lambda U: U - inv_d * (L @ U), U0, inv_d * B, cfg)
    U = meta[0]
    if cfg.class_priors is not None:
        if len(cfg.class_priors) != labels.k:
            raise ValueError(f"expected {labels.k} class priors, got {len(cfg.class_priors)}")
        ybar = labels.counts / labels.size
        U = U * (np.asarray(cfg.class_priors) / ybar)
    return _result(U, meta, decode(U))


def ipl(ops: GraphOperators, labels: LabelSet, cfg: SolverConfig | None = None) -> PropagationResult:
    cfg = cfg or SolverConfig()
    a1, a2, a3 = cfg.resolved_alphas("ipl")
    _check_unit_interval(a1, "alpha1", closed_right=True)
    if a2 < 0:
        raise ValueError("alpha2 must be nonnegative")
    if not a3 > 0:
        raise ValueError("alpha3 must be positive")
    d = ops.degrees
    P = ops.random_walk
    pi = ops.pi_p
    inv_d = (1.0 / d)[:, None]
    B = build_source_vector(labels, ops.n, "multiclass").values
    U0 = inv_d * labels.onehot(ops.n)

    def step(U):
        return P @ U - a1 * (pi @ U) + a2 * U

    meta = _iterate(step, U0, a3 * inv_d * B, cfg)
    U = meta[0]
    return _result(U, meta, decode(U))


SOLVERS = {
    "grf": grf_closed_form,
    "mgrf": mgrf,
    "igrf": igrf,
    "poisson": poisson_learning,
    "ipl": ipl,
}


def solve(name: str, ops: GraphOperators, labels: LabelSet, cfg: SolverConfig | None = None) -> PropagationResult:
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return fn(ops, labels, cfg)

