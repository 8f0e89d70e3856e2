"""Normalized-Legendre expansions of residual maps on the canonical cube.

Each residual f_i : [-1,1]^N -> R is approximated by a full tensor expansion
sum_k alpha_k P_k(theta) with P_k a product of normalized Legendre
polynomials, fit by collocation on a tensor grid of Chebyshev nodes.  The
expansion coefficients double as the data for the rank diagnostics used to
detect linearly dependent residual sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import SurrogateError
from .models import ParameterBox

__all__ = [
    "legendre_eval",
    "legendre_table",
    "chebyshev_nodes",
    "MultiIndexSet",
    "CollocationDesign",
    "Surrogate",
    "fit",
    "RankReport",
    "rank_diagnostic",
    "save_surrogate",
    "load_surrogate",
]


def legendre_table(max_order: int, x):
    """Values and derivatives of normalized Legendre polynomials P_0..P_max.

    Returns arrays of shape (max_order+1,) + shape(x).  P_n = p_n sqrt(n+1/2)
    with p_n the classical Legendre polynomial from the three-term recurrence
    (n+1) p_{n+1} = (2n+1) x p_n - n p_{n-1}.
    """
    x = np.asarray(x, dtype=float)
    shape = (max_order + 1,) + x.shape
    p = np.empty(shape)
    dp = np.empty(shape)
    p[0] = 1.0
    dp[0] = 0.0
    if max_order >= 1:
        p[1] = x
        dp[1] = 1.0
    for n in range(1, max_order):
        p[n + 1] = ((2 * n + 1) * x * p[n] - n * p[n - 1]) / (n + 1)
        # derivative recurrence: p'_{n+1} = p'_{n-1} + (2n+1) p_n
        dp[n + 1] = dp[n - 1] + (2 * n + 1) * p[n]
    scale = np.sqrt(np.arange(max_order + 1) + 0.5)
    scale = scale.reshape((-1,) + (1,) * x.ndim)
    return p * scale, dp * scale


def legendre_eval(order: int, x):
    """(P_k(x), P_k'(x)) for the normalized Legendre polynomial of one order."""
    p, dp = legendre_table(order, np.asarray(x, dtype=float))
    return p[order], dp[order]


def chebyshev_nodes(n: int) -> np.ndarray:
    """Roots of the degree-n Chebyshev polynomial of the first kind, ascending."""
    if n < 1:
        raise SurrogateError("need at least one Chebyshev node")
    k = np.arange(1, n + 1)
    return np.sort(np.cos((2 * k - 1) * np.pi / (2 * n)))


@dataclass(frozen=True)
class MultiIndexSet:
    """Full tensor multi-index set {k : ||k||_inf <= max_order}, lex ordered."""

    dim: int
    max_order: int
    indices: tuple = field(init=False)

    def __post_init__(self):
        idx = tuple(product(range(self.max_order + 1), repeat=self.dim))
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return (self.max_order + 1) ** self.dim


@dataclass(frozen=True)
class CollocationDesign:
    """Tensor grid of Chebyshev nodes with the Legendre design matrix."""

    index_set: MultiIndexSet
    chebyshev_order: int
    axis_nodes: np.ndarray = field(init=False)   # (M_C,)
    nodes: np.ndarray = field(init=False)        # (M_C^N, N), lex ordered
    matrix: np.ndarray = field(init=False)       # (M_C^N, basis)

    def __post_init__(self):
        M = self.index_set.max_order
        if self.chebyshev_order < M + 1:
            raise SurrogateError(
                f"need chebyshev_order >= {M + 1} for an order-{M} expansion"
            )
        axis = chebyshev_nodes(self.chebyshev_order)
        nodes = np.array(list(product(axis, repeat=self.index_set.dim)))
        object.__setattr__(self, "axis_nodes", axis)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "matrix", _design_matrix(self.index_set, nodes))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def node_axis_indices(self) -> np.ndarray:
        """(n_nodes, N) per-axis index of each node in the lex ordering."""
        Mc = self.chebyshev_order
        N = self.index_set.dim
        out = np.empty((self.n_nodes, N), dtype=int)
        for j in range(N):
            out[:, j] = (np.arange(self.n_nodes) // Mc ** (N - 1 - j)) % Mc
        return out


def _design_matrix(index_set: MultiIndexSet, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    tables = [legendre_table(index_set.max_order, points[:, j])[0]
              for j in range(index_set.dim)]
    cols = []
    for k in index_set.indices:
        col = np.ones(points.shape[0])
        for j, kj in enumerate(k):
            col = col * tables[j][kj]
        cols.append(col)
    return np.column_stack(cols)


@dataclass(frozen=True)
class Surrogate:
    """Fitted expansions of K residuals over a physical parameter box."""

    index_set: MultiIndexSet
    box: ParameterBox
    coefficients: np.ndarray           # (basis, K), stored in cube variables
    training_nodes: Optional[np.ndarray] = None   # cube coordinates
    training_values: Optional[np.ndarray] = None  # (n_nodes, K)
    training_stderr: Optional[np.ndarray] = None
    fit_residual: Optional[np.ndarray] = None     # per-residual solve residual
    condition_number: float = float("nan")

    @property
    def n_residuals(self) -> int:
        return self.coefficients.shape[1]

    def eval_cube(self, u):
        """Residual vector and Jacobian (cube coordinates) at u in [-1,1]^N."""
        u = np.asarray(u, dtype=float)
        N = self.index_set.dim
        M = self.index_set.max_order
        vals = []
        ders = []
        for j in range(N):
            pj, dpj = legendre_table(M, np.asarray(u[j]))
            vals.append(pj)
            ders.append(dpj)
        basis = np.empty(self.index_set.size)
        dbasis = np.empty((self.index_set.size, N))
        for i, k in enumerate(self.index_set.indices):
            prod_all = 1.0
            for j, kj in enumerate(k):
                prod_all *= vals[j][kj]
            basis[i] = prod_all
            for j in range(N):
                term = ders[j][k[j]]
                for l, kl in enumerate(k):
                    if l != j:
                        term *= vals[l][kl]
                dbasis[i, j] = term
        f = basis @ self.coefficients
        J = dbasis.T @ self.coefficients
        return f, J.T

    def eval(self, theta_phys):
        """Residuals and Jacobian with respect to the physical parameters."""
        theta_phys = np.asarray(theta_phys, dtype=float)
        if not self.box.contains(theta_phys):
            raise SurrogateError(f"theta {theta_phys} outside the surrogate box")
        u = self.box.to_cube(theta_phys)
        f, J = self.eval_cube(u)
        return f, J * self.box.cube_jacobian()[None, :]

    def cost(self, theta_phys) -> float:
        f, _ = self.eval(theta_phys)
        return float(f @ f)


def fit(values: np.ndarray, design: CollocationDesign, box: ParameterBox,
        stderr: Optional[np.ndarray] = None) -> Surrogate:
    """Solve the collocation system for the expansion coefficients.

    ``values`` has shape (n_nodes, K): residual values at the design nodes in
    the design's lexicographic node order.  Uses column-pivoted QR; exact
    interpolation when the node count equals the basis size.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.ndim == 2 and values.shape[0] != design.n_nodes:
        raise SurrogateError(
            f"expected {design.n_nodes} rows of training values, got {values.shape[0]}"
        )
    A = design.matrix
    svals = linalg.svdvals(A)
    cond = svals[0] / svals[-1] if svals[-1] > 0 else np.inf
    if svals[-1] <= 1e-12 * svals[0]:
        raise SurrogateError(f"rank-deficient design matrix (cond={cond:.3e})")
    Q, R, perm = linalg.qr(A, mode="economic", pivoting=True)
    coef_perm = linalg.solve_triangular(R, Q.T @ values)
    coefficients = np.empty(coef_perm.shape)
    coefficients[perm] = coef_perm
    resid = np.linalg.norm(A @ coefficients - values, axis=0)
    return Surrogate(
        index_set=design.index_set,
        box=box,
        coefficients=coefficients,
        training_nodes=design.nodes,
        training_values=values,
        training_stderr=None if stderr is None else np.asarray(stderr, float),
        fit_residual=resid,
        condition_number=float(cond),
    )


# ---------------------------------------------------------------------------
# Rank diagnostics
# ---------------------------------------------------------------------------

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RankReport:
    coefficient_rank: int
    coefficient_singular_values: np.ndarray
    n_residuals: int
    basis_size: int
    dependent: bool
    underdetermined: bool
    jacobian_rank: Optional[int] = None
    jacobian_singular_values: Optional[np.ndarray] = None
    jacobian_full_rank: Optional[bool] = None


def rank_diagnostic(s: Surrogate, theta_phys=None) -> RankReport:
    """Numerical rank of the coefficient matrix, and of the Jacobian at theta.

    A rank below min(K, basis size) flags linear dependence among the fitted
    residual expansions; K < N flags an underdetermined problem outright.
    """
    K = s.n_residuals
    N = s.index_set.dim
    A = s.coefficients.T  # (K, basis)
    svals = linalg.svdvals(A)
    rank = int(np.sum(svals > RANK_TOL * svals[0])) if svals.size else 0
    dependent = rank < min(K, s.index_set.size)
    underdetermined = K < N
    jac_rank = None
    jac_svals = None
    jac_full = None
    if theta_phys is not None:
        _, J = s.eval(np.asarray(theta_phys, dtype=float))
        jac_svals = linalg.svdvals(J)
        jac_rank = int(np.sum(jac_svals > RANK_TOL * jac_svals[0]))
        jac_full = jac_rank == N
    return RankReport(
        coefficient_rank=rank,
        coefficient_singular_values=svals,
        n_residuals=K,
        basis_size=s.index_set.size,
        dependent=dependent or underdetermined,
        underdetermined=underdetermined,
        jacobian_rank=jac_rank,
        jacobian_singular_values=jac_svals,
        jacobian_full_rank=jac_full,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_surrogate(s: Surrogate, path) -> None:
    doc = {
        "dim": s.index_set.dim,
        "max_order": s.index_set.max_order,
        "box_lower": [float(v) for v in s.box.lower],
        "box_upper": [float(v) for v in s.box.upper],
        "coefficients": [[repr(float(v)) for v in row] for row in s.coefficients],
        "training_nodes": None if s.training_nodes is None else
            [[repr(float(v)) for v in row] for row in s.training_nodes],
        "training_values": None if s.training_values is None else
            [[repr(float(v)) for v in row] for row in s.training_values],
        "fit_residual": None if s.fit_residual is None else
            [repr(float(v)) for v in s.fit_residual],
        "condition_number": repr(float(s.condition_number)),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _parse_rows(rows):
    if rows is None:
        return None
    return np.array([[float(v) for v in row] for row in rows])


def load_surrogate(path) -> Surrogate:
    with open(path) as fh:
        doc = json.load(fh)
    return Surrogate(
        index_set=MultiIndexSet(doc["dim"], doc["max_order"]),
        box=ParameterBox(doc["box_lower"], doc["box_upper"]),
        coefficients=_parse_rows(doc["coefficients"]),
        training_nodes=_parse_rows(doc["training_nodes"]),
        training_values=_parse_rows(doc["training_values"]),
        fit_residual=None if doc["fit_residual"] is None
            else np.array([float(v) for v in doc["fit_residual"]]),
        condition_number=float(doc["condition_number"]),
    )
