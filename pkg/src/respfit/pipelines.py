"""End-to-end estimation recipes for the two case studies.

Each pipeline glues the modules together the same way:

1. simulate one long "data" trajectory at the true parameters;
2. reduce the directly identifiable parameters from the data
   (temperature, friction / skew coefficient);
3. simulate short training runs at tensor collocation nodes of the
   remaining parameters (parallel across nodes), fit the polynomial
   surrogate of the residual map, and solve by multi-start Gauss-Newton;
4. post-process (moment-matching closure for the Morse geometry).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, EstimationError
from .models import ModelSpec, ParameterBox, get_model, conjugate_B
from .sde import IntegratorConfig, Trajectory, simulate
from .solver import EstimationResult, GaussNewtonConfig, multistart
from .stats import (
    EssentialStatistics,
    LagGrid,
    batch_mean_stderr,
    derivative_at_zero_plus,
    equilibrium_moments,
    morse_unit_moments,
    quadrature_moments,
    two_point_correlation,
)
from .surrogate import CollocationDesign, MultiIndexSet, Surrogate, fit

__all__ = [
    "PipelineConfig",
    "Reduction",
    "ConventionalEstimate",
    "PipelineResult",
    "langevin_reduce",
    "langevin_conventional",
    "conventional_moment_map",
    "conventional_sensitivity_derivatives",
    "langevin_response_pipeline",
    "triplewell_reduce",
    "triplewell_equipartition",
    "triplewell_response_pipeline",
    "save_estimates_csv",
    "write_manifest",
]

# fitting boxes for the surrogate-estimated parameters
LANGEVIN_FIT_BOX = ParameterBox([0.1, 5.0], [0.4, 15.0])      # (eps, a)
TRIPLEWELL_FIT_BOX = ParameterBox([0.5, 0.0], [1.5, 0.5])     # (a, gamma)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to re-run a case study bit-identically."""

    model: str
    true_theta: dict
    scheme: str
    dt: float
    lag: float
    n_samples: int
    lag_grid: LagGrid
    max_order: int
    chebyshev_order: int
    solver: GaussNewtonConfig
    seed: int = 0
    node_n_samples: Optional[int] = None
    node_seed: Optional[int] = None
    burn_in: Optional[float] = None
    threads: int = 1

    def __post_init__(self):
        get_model(self.model)  # raises on unknown id
        span = (self.n_samples - 1) * self.lag
        if self.lag_grid.lags[-1] >= span:
            raise ConfigError(
                f"largest lag {self.lag_grid.lags[-1]} exceeds the "
                f"trajectory span {span}"
            )
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def data_integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.scheme, self.dt, self.lag, self.n_samples,
                                burn_in=self.burn_in, seed=self.seed)

    def node_integrator(self, seed: int) -> IntegratorConfig:
        n = self.node_n_samples or self.n_samples
        return IntegratorConfig(self.scheme, self.dt, self.lag, n,
                                burn_in=self.burn_in, seed=seed)

    def manifest(self) -> dict:
        return {
            "model": self.model,
            "true_theta": {k: float(v) for k, v in self.true_theta.items()},
            "scheme": self.scheme,
            "dt": self.dt,
            "lag": self.lag,
            "n_samples": self.n_samples,
            "lag_grid": [float(t) for t in self.lag_grid.lags],
            "max_order": self.max_order,
            "chebyshev_order": self.chebyshev_order,
            "solver": {
                "step_tol": self.solver.step_tol,
                "max_iter": self.solver.max_iter,
                "damping_floor": self.solver.damping_floor,
                "n_starts": self.solver.n_starts,
                "seed": self.solver.seed,
            },
            "seed": self.seed,
            "node_n_samples": self.node_n_samples,
            "node_seed": self.node_seed,
            "burn_in": self.burn_in,
            "threads": self.threads,
        }


@dataclass(frozen=True)
class Reduction:
    """Directly reduced parameters with their Monte-Carlo standard errors."""

    names: List[str]
    values: np.ndarray
    stderr: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.names, (float(v) for v in self.values)))


@dataclass(frozen=True)
class ConventionalEstimate:
    eps: float
    a: float
    x0: float
    scanned_interval: tuple = (None, None)


@dataclass(frozen=True)
class PipelineResult:
    config: PipelineConfig
    reduction: Reduction
    estimate: dict                      # parameter name -> value, all of theta
    estimation: EstimationResult
    surrogate: Surrogate
    data_statistics: EssentialStatistics
    node_values: np.ndarray             # (n_nodes, K) training residuals
    fit_names: List[str]


# ---------------------------------------------------------------------------
# Langevin-Morse case study
# ---------------------------------------------------------------------------

def langevin_reduce(traj: Trajectory) -> Reduction:
    """(kBT, gamma) from equipartition and the velocity-correlation slope."""
    v = traj.states[:, 1]
    centered = (v - v.mean()) ** 2
    kBT = float(centered.mean())
    kBT_se = batch_mean_stderr(centered)
    slope = derivative_at_zero_plus(traj, 1, 1, stencil=3)
    gamma = -slope.scalar / kBT
    gamma_se = float(slope.stderr[0, 0]) / kBT
    return Reduction(["kBT", "gamma"], np.array([kBT, gamma]),
                     np.array([kBT_se, gamma_se]))


def _morse_axo(eps: float, kBT: float, mean_dag: float, var_dag: float):
    """Scale/shift (a, x0) matching the data mean and variance at fixed eps."""
    m = morse_unit_moments(eps, kBT, (1, 2))
    var_unit = m[1] - m[0] ** 2
    a = np.sqrt(var_unit / var_dag)
    x0 = mean_dag - m[0] / a
    return float(a), float(x0)


def _morse_third_moment(eps: float, kBT: float, a: float, x0: float) -> float:
    """E[x^3] under the scaled Morse density via the unit-shape moments."""
    m1, m2, m3 = morse_unit_moments(eps, kBT, (1, 2, 3))
    return float(m3 / a ** 3 + 3 * x0 * m2 / a ** 2
                 + 3 * x0 ** 2 * m1 / a + x0 ** 3)


def conventional_moment_map(eps: float, kBT: float,
                            mean_dag: float, var_dag: float) -> float:
    """Model-side E[x^3] with (a, x0) re-matched to the data mean/variance."""
    a, x0 = _morse_axo(eps, kBT, mean_dag, var_dag)
    return _morse_third_moment(eps, kBT, a, x0)


def langevin_conventional(traj: Trajectory, kBT: float,
                          eps_range=(0.1, 0.4),
                          n_scan: int = 31) -> ConventionalEstimate:
    """Moment-matching baseline: root-solve the third-moment equation in eps."""
    (m1, _), (m2, _), (m3, _) = equilibrium_moments(traj, (1, 2, 3))
    var_dag = m2 - m1 ** 2
    return _conventional_from_moments(m1, var_dag, m3, kBT, eps_range, n_scan)


def _conventional_from_moments(mean_dag, var_dag, third_dag, kBT,
                               eps_range, n_scan) -> ConventionalEstimate:
    def mismatch(eps):
        return conventional_moment_map(eps, kBT, mean_dag, var_dag) - third_dag

    grid = np.linspace(eps_range[0], eps_range[1], n_scan)
    vals = np.array([mismatch(e) for e in grid])
    sign_change = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_change.size == 0:
        raise EstimationError(
            "third-moment equation has no sign change on the scanned "
            f"interval [{eps_range[0]}, {eps_range[1]}] ({n_scan} points)"
        )
    i = sign_change[0]
    eps = brentq(mismatch, grid[i], grid[i + 1], xtol=1e-12)
    a, x0 = _morse_axo(eps, kBT, mean_dag, var_dag)
    return ConventionalEstimate(float(eps), a, x0, scanned_interval=eps_range)


def conventional_sensitivity_derivatives(kBT: float = 1.0, eps: float = 0.2,
                                         a: float = 10.0, x0: float = 0.0,
                                         delta: float = 1e-4):
    """Sensitivity of the matched third moment to the reduced inputs.

    The temperature derivative comes from the explicit Gibbs identity

        d/dkBT E[x^n] = (E[x^n U] - E[x^n] E[U]) / kBT^2

    at fixed geometry (a, x0); the eps derivative, for which no closed form
    is convenient, is a central difference of the matching map with (a, x0)
    re-solved from the (frozen) data mean and variance at each eps.  Their
    ratio is the amplification factor of temperature error in the
    moment-matching baseline.  Returns (dE[x^3]/dkBT, dE[x^3]/deps).
    """
    model = get_model("langevin_morse")
    theta = model.params(
        {"gamma": 0.5, "kBT": kBT, "eps": eps, "a": a, "x0": x0}
    ).values
    mom = quadrature_moments(model, theta, (1, 2))
    mean_dag, var_dag = float(mom[0]), float(mom[1] - mom[0] ** 2)

    # E[x^3 U] via the unit variable y = a(x - x0); same weight as the
    # unit-shape moments, so the same integration machinery applies.
    m = morse_unit_moments(eps, kBT, (1, 2, 3, 4, 5, 6))
    U0m = _morse_shape_moments(eps, kBT)
    x_mom = lambda k: _shifted_moment(m, a, x0, k)
    Ex3 = x_mom(3)
    # x^3 U as a polynomial in y times U0(y): expand (y/a + x0)^3
    Ex3U = eps * (U0m[3] / a ** 3 + 3 * x0 * U0m[2] / a ** 2
                  + 3 * x0 ** 2 * U0m[1] / a + x0 ** 3 * U0m[0])
    EU = eps * U0m[0]
    d_kBT = (Ex3U - Ex3 * EU) / kBT ** 2

    def fmap(eps_):
        return conventional_moment_map(eps_, kBT, mean_dag, var_dag)

    d_eps = (fmap(eps + delta) - fmap(eps - delta)) / (2 * delta)
    return float(d_kBT), float(d_eps)


def _shifted_moment(m, a, x0, k):
    """E[x^k] for x = y/a + x0 from the raw unit moments m[0]=E[y], ..."""
    my = np.concatenate([[1.0], m])  # my[p] = E[y^p]
    from math import comb
    return float(sum(comb(k, p) * my[p] / a ** p * x0 ** (k - p)
                     for p in range(k + 1)))


def _morse_shape_moments(eps, kBT):
    """(E[U0], E[y U0], E[y^2 U0], E[y^3 U0]) under the unit-shape density."""
    from scipy.integrate import quad
    from scipy.optimize import minimize_scalar

    def U0(u):
        return np.exp(-2.0 * u) - 2.0 * np.exp(-u) + 0.01 * u * u

    def neg_log(y):
        return eps * U0(y) / kBT

    res = minimize_scalar(neg_log, bracket=(-1.0, 0.0, 1.0))
    base = res.fun

    def edge(sign):
        y = res.x + sign
        while neg_log(y) - base < 40.0:
            y = res.x + 2.0 * (y - res.x)
        return y

    lo, hi = edge(-1.0), edge(1.0)
    w = lambda y: np.exp(-(neg_log(y) - base))
    Z = quad(w, lo, hi, epsrel=1e-11, limit=500)[0]
    out = []
    for k in range(4):
        out.append(quad(lambda y: y ** k * U0(y) * w(y), lo, hi,
                        epsrel=1e-11, limit=500)[0] / Z)
    return np.array(out)


# ---------------------------------------------------------------------------
# Parallel node training
# ---------------------------------------------------------------------------

def _node_statistic(args):
    """Worker: simulate one collocation node and return the lag statistic."""
    (model_name, theta_values, scheme, dt, lag, n_samples, burn_in, seed,
     lags, comp_a, comp_b) = args
    model = get_model(model_name)
    cfg = IntegratorConfig(scheme, dt, lag, n_samples, burn_in=burn_in,
                           seed=seed)
    traj = simulate(model, np.asarray(theta_values), cfg)
    grid = LagGrid(np.asarray(lags))
    es = two_point_correlation(traj, comp_a, comp_b, grid)
    return es.scalar_values, es.scalar_stderr


def _train_nodes(cfg: PipelineConfig, thetas: np.ndarray,
                 comp_a: int, comp_b: int) -> np.ndarray:
    base_seed = cfg.node_seed if cfg.node_seed is not None else cfg.seed + 1000
    jobs = [
        (cfg.model, theta, cfg.scheme, cfg.dt, cfg.lag,
         cfg.node_n_samples or cfg.n_samples, cfg.burn_in, base_seed + i,
         cfg.lag_grid.lags, comp_a, comp_b)
        for i, theta in enumerate(thetas)
    ]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            out = list(pool.map(_node_statistic, jobs))
    else:
        out = [_node_statistic(j) for j in jobs]
    return np.array([v for v, _ in out])


def langevin_response_pipeline(cfg: PipelineConfig,
                               data: Optional[Trajectory] = None,
                               kBT_override: Optional[float] = None) -> PipelineResult:
    """Two-point velocity statistics -> (eps, a, x0) for the Morse geometry.

    ``kBT_override`` replaces the reduced temperature everywhere downstream
    (conjugate normalization and training-node dynamics); used to probe how
    temperature error propagates into the fit.
    """
    model = get_model(cfg.model)
    theta_true = model.params(cfg.true_theta).values
    if data is None:
        data = simulate(model, theta_true, cfg.data_integrator())
    red = langevin_reduce(data)
    kBT_hat, gamma_hat = red.values
    if kBT_override is not None:
        kBT_hat = float(kBT_override)

    es = two_point_correlation(data, 1, 1, cfg.lag_grid, names=("v", "v"))
    M0 = es.scalar_values / kBT_hat     # response values at the data kBT

    design = CollocationDesign(MultiIndexSet(2, cfg.max_order),
                               cfg.chebyshev_order)
    nodes_phys = np.array([LANGEVIN_FIT_BOX.from_cube(u) for u in design.nodes])
    thetas = np.array([
        [gamma_hat, kBT_hat, eps, a, 0.0] for eps, a in nodes_phys
    ])
    node_corr = _train_nodes(cfg, thetas, 1, 1)
    residuals = M0[None, :] - node_corr / kBT_hat

    s = fit(residuals, design, LANGEVIN_FIT_BOX)
    result = multistart(s, cfg.solver)
    eps_hat = float(result.theta_hat[0])

    (m1, _), (m2, _) = equilibrium_moments(data, (1, 2))
    a_hat, x0_hat = _morse_axo(eps_hat, kBT_hat, m1, m2 - m1 ** 2)

    estimate = {
        "kBT": float(kBT_hat), "gamma": float(gamma_hat),
        "eps": eps_hat, "a": a_hat, "x0": x0_hat,
        "a_surrogate": float(result.theta_hat[1]),
    }
    return PipelineResult(cfg, red, estimate, result, s, es, residuals,
                          ["eps", "a"])


# ---------------------------------------------------------------------------
# Triple-well case study
# ---------------------------------------------------------------------------

def triplewell_reduce(traj: Trajectory) -> Reduction:
    """(kBT, d) from the short-time slopes of the position correlations."""
    s11 = derivative_at_zero_plus(traj, 0, 0, stencil=3)
    s21 = derivative_at_zero_plus(traj, 1, 0, stencil=3)
    kBT = -s11.scalar
    d = -s21.scalar / kBT
    kBT_se = float(s11.stderr[0, 0])
    d_se = float(s21.stderr[0, 0]) / abs(kBT)
    return Reduction(["kBT", "d"], np.array([kBT, d]), np.array([kBT_se, d_se]))


def triplewell_equipartition(traj: Trajectory, model: ModelSpec = None):
    """k_{i,j}(0) = E[x_i B_j(x)] with its standard errors; identity at theta."""
    model = model or get_model(traj.model_name)
    dim = model.dim
    k0 = np.empty((dim, dim))
    se = np.empty((dim, dim))
    for j in range(dim):
        c = np.zeros(dim)
        c[j] = 1.0
        B = conjugate_B(model, traj.states, traj.theta, c).sum(axis=-1)
        for i in range(dim):
            prod = traj.states[:, i] * B
            k0[i, j] = prod.mean()
            se[i, j] = batch_mean_stderr(prod)
    return k0, se


def triplewell_response_pipeline(cfg: PipelineConfig,
                                 data: Optional[Trajectory] = None) -> PipelineResult:
    """Position autocorrelation m_{1,1}(t_i) -> (a, gamma)."""
    model = get_model(cfg.model)
    theta_true = model.params(cfg.true_theta).values
    if data is None:
        data = simulate(model, theta_true, cfg.data_integrator())
    red = triplewell_reduce(data)
    kBT_hat, d_hat = red.values

    es = two_point_correlation(data, 0, 0, cfg.lag_grid, names=("x1", "x1"))
    M0 = es.scalar_values

    box = model.box
    d_node = float(np.clip(d_hat, box.lower[0], box.upper[0]))
    kBT_node = float(np.clip(kBT_hat, box.lower[2], box.upper[2]))

    design = CollocationDesign(MultiIndexSet(2, cfg.max_order),
                               cfg.chebyshev_order)
    nodes_phys = np.array([TRIPLEWELL_FIT_BOX.from_cube(u)
                           for u in design.nodes])
    thetas = np.array([
        [d_node, a, kBT_node, g] for a, g in nodes_phys
    ])
    node_corr = _train_nodes(cfg, thetas, 0, 0)
    residuals = M0[None, :] - node_corr

    s = fit(residuals, design, TRIPLEWELL_FIT_BOX)
    result = multistart(s, cfg.solver)
    estimate = {
        "kBT": float(kBT_hat), "d": float(d_hat),
        "a": float(result.theta_hat[0]), "gamma": float(result.theta_hat[1]),
    }
    return PipelineResult(cfg, red, estimate, result, s, es, residuals,
                          ["a", "gamma"])


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def save_estimates_csv(estimate: dict, path) -> None:
    """One-row table of the final estimates, full float precision."""
    keys = list(estimate)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        w.writerow([repr(float(estimate[k])) for k in keys])


def write_manifest(path, cfg: PipelineConfig, extra: dict = None) -> None:
    doc = {"config": cfg.manifest()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
