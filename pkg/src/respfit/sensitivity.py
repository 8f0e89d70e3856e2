"""Parameter-identifiability diagnostics.

Two complementary views:

* a priori — the spread of the training statistic across the collocation
  nodes of each parameter axis (cheap, reuses surrogate training data);
* a posteriori — ensemble averages of the pathwise derivative Y(t) =
  D_theta X(t), integrated as an ODE along each simulated path.  For additive
  noise the Y-equation has no stochastic term, so a deterministic RK4 sweep
  along the frozen path is exact up to the interpolation of X between steps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import StatsError, UnsupportedCapabilityError
from .models import ModelSpec
from .surrogate import CollocationDesign

__all__ = [
    "SensitivityReport",
    "apriori_spread",
    "pathwise_derivative",
    "save_sensitivity_csv",
]


@dataclass(frozen=True)
class SensitivityReport:
    """Per-parameter sensitivity curves on a common time/lag grid."""

    kind: str                       # "apriori" or "pathwise"
    parameter_names: List[str]
    times: np.ndarray               # lags (a priori) or times (pathwise)
    curves: np.ndarray              # signed curves; see per-op docstrings
    abs_curves: np.ndarray          # |.| taken after averaging
    ensemble_size: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.curves)):
            raise StatsError("sensitivity curves contain non-finite values")
        if self.ensemble_size < 1:
            raise StatsError("ensemble size must be at least 1")


def apriori_spread(values: np.ndarray, design: CollocationDesign,
                   lags: np.ndarray,
                   parameter_names: Optional[List[str]] = None) -> SensitivityReport:
    """Spread of the training statistic along each collocation axis.

    ``values`` has shape (n_nodes, K): statistic values at the design nodes
    in the design's node order.  For axis j the spread at lag i is the range
    (max - min) of the statistic over the nodes that vary axis j while every
    other axis sits at its middle node.  Curves have shape (N, K).
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != design.n_nodes:
        raise StatsError(
            f"expected {design.n_nodes} rows of training values, got {values.shape[0]}"
        )
    Mc = design.chebyshev_order
    if Mc < 2:
        raise StatsError("need at least 2 nodes per axis for a spread")
    N = design.index_set.dim
    lags = np.asarray(lags, dtype=float)
    if lags.size != values.shape[1]:
        raise StatsError("lag grid length does not match the statistic columns")
    axis_idx = design.node_axis_indices()
    mid = Mc // 2
    curves = np.empty((N, values.shape[1]))
    for j in range(N):
        others = [l for l in range(N) if l != j]
        mask = np.all(axis_idx[:, others] == mid, axis=1) if others else \
            np.ones(design.n_nodes, dtype=bool)
        sub = values[mask]
        curves[j] = sub.max(axis=0) - sub.min(axis=0)
    names = parameter_names or [f"theta{j}" for j in range(N)]
    return SensitivityReport(
        kind="apriori",
        parameter_names=list(names),
        times=lags,
        curves=curves,
        abs_curves=np.abs(curves),
        ensemble_size=Mc,
    )


def pathwise_derivative(model: ModelSpec, theta, parameter: str,
                        ensemble_size: int, horizon: float, dt: float,
                        seed: int = 0, initial_state=None,
                        y0=None) -> SensitivityReport:
    """Ensemble mean of Y(t) = D_theta X(t) for one parameter.

    X is advanced by Euler-Maruyama; Y solves dY/dt = (d_x b) Y + d_theta b
    along each path by classical RK4, with X interpolated linearly to the
    half step.  Requires the parameter to not enter the diffusion; otherwise
    the Y-equation would carry a stochastic term this integrator cannot
    represent.  Curves have shape (dim, n_times).
    """
    pv = model.params(theta)
    p = pv.values
    j = model.param_names.index(parameter)
    if model.drift_jac_x is None or model.drift_dtheta is None:
        raise UnsupportedCapabilityError(
            f"model '{model.name}' does not provide drift derivatives"
        )
    if model.diffusion_dtheta is None:
        raise UnsupportedCapabilityError(
            f"model '{model.name}' does not provide diffusion derivatives"
        )
    sigma_dth = np.asarray(model.diffusion_dtheta(p))[..., j]
    if np.any(sigma_dth != 0.0):
        raise UnsupportedCapabilityError(
            f"parameter '{parameter}' enters the diffusion; the pathwise "
            "Y-equation is not an ODE"
        )
    if ensemble_size < 1:
        raise StatsError("ensemble size must be at least 1")
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise StatsError("horizon must be an integer multiple of dt")
    rng = np.random.default_rng(seed)
    dim = model.dim
    if initial_state is None:
        X = np.tile(model.default_state(p), (ensemble_size, 1))
    else:
        X = np.broadcast_to(
            np.asarray(initial_state, dtype=float), (ensemble_size, dim)
        ).copy()
    if y0 is None:
        Y = np.zeros((ensemble_size, dim))
    else:
        Y = np.broadcast_to(np.asarray(y0, dtype=float), (ensemble_size, dim)).copy()
    sigma = np.asarray(model.diffusion(X[0], p), dtype=float)
    sqh = np.sqrt(dt)
    times = dt * np.arange(n_steps + 1)
    mean = np.empty((n_steps + 1, dim))
    mean[0] = Y.mean(axis=0)
    curves_abs = np.empty((n_steps + 1, dim))
    curves_abs[0] = np.abs(mean[0])
    for step in range(n_steps):
        drift = model.drift(X, p)
        noise = rng.standard_normal((ensemble_size, sigma.shape[1]))
        X_new = X + drift * dt + sqh * noise @ sigma.T
        X_mid = 0.5 * (X + X_new)
        k1 = _y_rhs(model, X, Y, p, j)
        k2 = _y_rhs(model, X_mid, Y + 0.5 * dt * k1, p, j)
        k3 = _y_rhs(model, X_mid, Y + 0.5 * dt * k2, p, j)
        k4 = _y_rhs(model, X_new, Y + dt * k3, p, j)
        Y = Y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X = X_new
        mean[step + 1] = Y.mean(axis=0)
        curves_abs[step + 1] = np.abs(mean[step + 1])
    return SensitivityReport(
        kind="pathwise",
        parameter_names=[parameter],
        times=times,
        curves=mean.T,
        abs_curves=curves_abs.T,
        ensemble_size=ensemble_size,
    )


def _y_rhs(model, X, Y, p, j):
    A = model.drift_jac_x(X, p)
    b = model.drift_dtheta(X, p)[..., j]
    return np.einsum("...ik,...k->...i", A, Y) + b


def save_sensitivity_csv(report: SensitivityReport, path) -> None:
    """Curves as CSV: time column then one signed and one |.| column per row."""
    labels = []
    if report.kind == "pathwise":
        base = report.parameter_names[0]
        labels = [f"{base}_comp{i}" for i in range(report.curves.shape[0])]
    else:
        labels = list(report.parameter_names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"mean_{c}" for c in labels]
                   + [f"abs_{c}" for c in labels])
        for i, t in enumerate(report.times):
            w.writerow([repr(float(t))]
                       + [repr(float(v)) for v in report.curves[:, i]]
                       + [repr(float(v)) for v in report.abs_curves[:, i]])
