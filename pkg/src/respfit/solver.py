"""Multi-start Gauss-Newton minimization of surrogate least-squares costs.

The iteration runs in the canonical cube coordinates of the surrogate:

    u^k = u^{k-1} - [J^T J]^{-1} J^T f(u^{k-1})

with Levenberg damping engaged only when the normal equations become
numerically singular, projection of iterates onto the cube, and a
robust (median/MAD) inlier rule for aggregating the multi-start finals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import EstimationError
from .surrogate import Surrogate, RankReport, rank_diagnostic

__all__ = [
    "GaussNewtonConfig",
    "StartRecord",
    "EstimationResult",
    "gauss_newton",
    "multistart",
    "save_start_records_csv",
]

# condition of J^T J above which Levenberg damping kicks in
DAMPING_CONDITION = 1e12
# consecutive residual increases before a start is declared divergent
MAX_INCREASES = 5
# robust z-score cutoff for the inlier classification
INLIER_Z = 3.0
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class GaussNewtonConfig:
    """Settings for a single Gauss-Newton run and for the multistart driver."""

    step_tol: float = 1e-8          # cube units
    max_iter: int = 100
    damping_floor: float = 1e-8
    n_starts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.step_tol <= 0:
            raise EstimationError("step_tol must be positive")
        if self.n_starts < 1:
            raise EstimationError("need at least one start")
        if self.max_iter < 1:
            raise EstimationError("max_iter must be at least 1")


@dataclass(frozen=True)
class StartRecord:
    """Outcome of one Gauss-Newton run."""

    start: np.ndarray           # physical coordinates
    final: np.ndarray           # physical coordinates
    final_cube: np.ndarray
    residual_norm: float
    n_iterations: int
    path_length: float          # cumulative step length in cube units
    converged: bool
    boundary: bool


@dataclass(frozen=True)
class EstimationResult:
    """Aggregated multistart estimate with per-start diagnostics."""

    records: List[StartRecord]
    theta_hat: np.ndarray
    theta_median: np.ndarray
    inlier_mask: np.ndarray
    rank_report: RankReport

    @property
    def n_converged(self) -> int:
        return sum(r.converged for r in self.records)

    @property
    def n_inliers(self) -> int:
        return int(np.sum(self.inlier_mask))


def gauss_newton(s: Surrogate, theta0, cfg: GaussNewtonConfig) -> StartRecord:
    """Run damped Gauss-Newton from one start; never raises on divergence."""
    theta0 = np.asarray(theta0, dtype=float)
    if not s.box.contains(theta0):
        raise EstimationError(f"start point {theta0} outside the box")
    u = s.box.to_cube(theta0)
    f, _ = s.eval_cube(u)
    cost = float(f @ f)
    boundary = False
    converged = False
    path_length = 0.0
    n_increases = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        f, J = s.eval_cube(u)
        H = J.T @ J
        g = J.T @ f
        cond = np.linalg.cond(H)
        if cond > DAMPING_CONDITION or not np.isfinite(cond):
            u_new, new_cost = _damped_step(s, u, H, g, cost, cfg.damping_floor)
        else:
            step = np.linalg.solve(H, g)
            u_new = np.clip(u - step, -1.0, 1.0)
            f_new, _ = s.eval_cube(u_new)
            new_cost = float(f_new @ f_new)
        if np.any(np.abs(u_new) >= 1.0):
            boundary = True
        step_len = float(np.linalg.norm(u_new - u))
        path_length += step_len
        if new_cost > cost:
            n_increases += 1
            if n_increases >= MAX_INCREASES:
                u = u_new
                cost = new_cost
                break
        else:
            n_increases = 0
        u = u_new
        cost = new_cost
        if step_len < cfg.step_tol:
            converged = True
            break
    f, _ = s.eval_cube(u)
    return StartRecord(
        start=theta0,
        final=s.box.from_cube(u),
        final_cube=u,
        residual_norm=float(np.linalg.norm(f)),
        n_iterations=it,
        path_length=path_length,
        converged=converged,
        boundary=boundary,
    )


def _damped_step(s, u, H, g, cost, damping_floor):
    """Levenberg step: raise the damping until the residual stops increasing."""
    lam = damping_floor
    n = H.shape[0]
    best = None
    while lam <= DAMPING_CONDITION:
        step = np.linalg.solve(H + lam * np.eye(n), g)
        u_new = np.clip(u - step, -1.0, 1.0)
        f_new, _ = s.eval_cube(u_new)
        new_cost = float(f_new @ f_new)
        if best is None or new_cost < best[1]:
            best = (u_new, new_cost)
        if new_cost <= cost:
            return u_new, new_cost
        lam *= 10.0
    return best


def multistart(s: Surrogate, cfg: GaussNewtonConfig) -> EstimationResult:
    """Gauss-Newton from uniform random starts with robust aggregation."""
    rng = np.random.default_rng(cfg.seed)
    starts_cube = rng.uniform(-1.0, 1.0, size=(cfg.n_starts, s.index_set.dim))
    records = [gauss_newton(s, s.box.from_cube(u), cfg) for u in starts_cube]
    finals = np.array([r.final for r in records])
    conv = np.array([r.converged for r in records])
    clean = conv & ~np.array([r.boundary for r in records])
    if not np.any(conv):
        raise EstimationError(
            f"none of the {cfg.n_starts} starts converged; "
            "the surrogate or the lag grid is likely inadequate"
        )
    center = np.median(finals[conv], axis=0)
    mad = np.median(np.abs(finals[conv] - center), axis=0)
    spread = np.maximum(MAD_SCALE * mad, 1e-12 * np.maximum(np.abs(center), 1.0))
    inlier = clean & np.all(np.abs(finals - center) <= INLIER_Z * spread, axis=1)
    if not np.any(inlier):
        # all clean finals flagged: fall back to the converged set
        inlier = clean if np.any(clean) else conv
    theta_hat = finals[inlier].mean(axis=0)
    theta_median = np.median(finals[inlier], axis=0)
    if not s.box.contains(theta_hat):
        theta_hat = np.clip(theta_hat, s.box.lower, s.box.upper)
    return EstimationResult(
        records=records,
        theta_hat=theta_hat,
        theta_median=theta_median,
        inlier_mask=inlier,
        rank_report=rank_diagnostic(s, theta_phys=theta_hat),
    )


def save_start_records_csv(result: EstimationResult, path,
                           param_names: Optional[List[str]] = None) -> None:
    """Per-start finals as CSV (one row per start, full float precision)."""
    n = result.records[0].final.size
    names = param_names or [f"theta{j}" for j in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [f"start_{c}" for c in names] + [f"final_{c}" for c in names]
            + ["residual_norm", "n_iterations", "converged", "boundary", "inlier"]
        )
        for r, inl in zip(result.records, result.inlier_mask):
            w.writerow(
                [repr(v) for v in r.start] + [repr(v) for v in r.final]
                + [repr(r.residual_norm), r.n_iterations,
                   int(r.converged), int(r.boundary), int(inl)]
            )
