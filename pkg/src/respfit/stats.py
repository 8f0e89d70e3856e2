"""Equilibrium moments, two-point correlations and their short-time slopes.

Estimators are plain time averages over a stationary trajectory; Monte-Carlo
standard errors come from non-overlapping batch means with ceil(sqrt(n))
batches.  ``quadrature_moments`` provides the model-side (sampling-free)
moments used by the conventional matching method and as an oracle in tests.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .errors import StatsError, UnsupportedCapabilityError
from .models import ModelSpec
from .sde import Trajectory

__all__ = [
    "LagGrid",
    "EssentialStatistics",
    "DerivativeEstimate",
    "ResponseAnsatz",
    "two_point_correlation",
    "derivative_at_zero_plus",
    "correlation_time_derivative",
    "equilibrium_moments",
    "quadrature_moments",
    "morse_unit_moments",
    "fit_response_ansatz",
    "batch_mean_stderr",
    "save_statistics_csv",
    "load_statistics_csv",
]

MIN_PAIRS = 100


@dataclass(frozen=True)
class LagGrid:
    """Increasing positive lags, each an integer multiple of the sample lag h."""

    lags: np.ndarray

    def __post_init__(self):
        lags = np.atleast_1d(np.asarray(self.lags, dtype=float))
        if lags.size == 0 or np.any(lags <= 0) or np.any(np.diff(lags) <= 0):
            raise StatsError("lag grid must be strictly increasing and positive")
        object.__setattr__(self, "lags", lags)

    @classmethod
    def uniform(cls, start: float, step: float, count: int) -> "LagGrid":
        return cls(start + step * np.arange(count))

    @property
    def count(self) -> int:
        return self.lags.size

    def steps(self, h: float) -> np.ndarray:
        ratio = self.lags / h
        steps = np.rint(ratio).astype(int)
        if np.any(np.abs(ratio - steps) > 1e-9 * np.maximum(1.0, np.abs(ratio))):
            raise StatsError(f"lags {self.lags} are not integer multiples of h={h}")
        return steps


@dataclass(frozen=True)
class EssentialStatistics:
    """Estimated two-point statistics E[A(X(t)) (x) B(X(0))] on a lag grid."""

    lags: np.ndarray
    values: np.ndarray   # (K, p, q)
    stderr: np.ndarray   # (K, p, q)
    n_samples: int
    observable: str = "A"
    conjugate: str = "B"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        stderr = np.asarray(self.stderr, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
            stderr = stderr[:, None, None]
        if not np.all(np.isfinite(values)):
            raise StatsError("non-finite correlation estimate")
        object.__setattr__(self, "lags", np.asarray(self.lags, dtype=float))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stderr", stderr)

    @property
    def scalar_values(self) -> np.ndarray:
        return self.values[:, 0, 0]

    @property
    def scalar_stderr(self) -> np.ndarray:
        return self.stderr[:, 0, 0]


def batch_mean_stderr(series: np.ndarray) -> float:
    """Batch-means standard error of the mean of a correlated series."""
    n = series.shape[0]
    nb = int(np.ceil(np.sqrt(n)))
    if nb < 2:
        return float("nan")
    bs = n // nb
    trimmed = series[: nb * bs]
    means = trimmed.reshape(nb, bs, *series.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(nb)


def _as_series(obs, traj: Trajectory) -> np.ndarray:
    """Evaluate an observable on the whole trajectory -> (n, p)."""
    if isinstance(obs, (int, np.integer)):
        return traj.states[:, [obs]]
    vals = np.asarray(obs(traj.states), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != traj.n_samples:
        raise StatsError("observable must return one row per sample")
    return vals


def two_point_correlation(
    traj: Trajectory,
    A: Union[int, Callable],
    B: Union[int, Callable],
    grid: LagGrid,
    names: tuple = ("A", "B"),
) -> EssentialStatistics:
    """Time-average estimate of E[A(X(s+t)) (x) B(X(s))] on the lag grid."""
    steps = grid.steps(traj.lag)
    if steps[-1] >= traj.n_samples:
        raise StatsError(
            f"largest lag {grid.lags[-1]} exceeds trajectory span {traj.span}"
        )
    a = _as_series(A, traj)
    b = _as_series(B, traj)
    p, q = a.shape[1], b.shape[1]
    K = grid.count
    values = np.empty((K, p, q))
    stderr = np.empty((K, p, q))
    for k, L in enumerate(steps):
        n_pairs = traj.n_samples - L
        if n_pairs < MIN_PAIRS:
            raise StatsError(f"only {n_pairs} usable pairs at lag {grid.lags[k]}")
        head = a[L:] if L > 0 else a
        tail = b[: traj.n_samples - L] if L > 0 else b
        prod = head[:, :, None] * tail[:, None, :]
        values[k] = prod.mean(axis=0)
        stderr[k] = batch_mean_stderr(prod)
    return EssentialStatistics(grid.lags, values, stderr, traj.n_samples,
                               names[0], names[1])


@dataclass(frozen=True)
class DerivativeEstimate:
    value: np.ndarray       # (p, q)
    stderr: np.ndarray      # (p, q)
    low_confidence: bool

    @property
    def scalar(self) -> float:
        return float(self.value[0, 0])


def derivative_at_zero_plus(
    traj: Trajectory,
    A: Union[int, Callable],
    B: Union[int, Callable],
    stencil: int = 2,
) -> DerivativeEstimate:
    """One-sided estimate of d/dt E[A(X(t)) (x) B(X(0))] at t = 0+.

    ``stencil=2`` is the forward difference (C(h)-C(0))/h; ``stencil=3`` is
    the second-order one-sided formula (-3 C(0) + 4 C(h) - C(2h)) / (2h).
    """
    if stencil not in (2, 3):
        raise StatsError("stencil must be 2 or 3")
    a = _as_series(A, traj)
    b = _as_series(B, traj)
    n = traj.n_samples
    if n < stencil + MIN_PAIRS:
        raise StatsError("trajectory too short for the derivative stencil")
    h = traj.lag
    m = n - (stencil - 1)
    tail = b[:m]
    if stencil == 2:
        diff = (a[1 : m + 1] - a[:m]) / h
    else:
        diff = (-3.0 * a[:m] + 4.0 * a[1 : m + 1] - a[2 : m + 2]) / (2.0 * h)
    prod = diff[:, :, None] * tail[:, None, :]
    value = prod.mean(axis=0)
    stderr = batch_mean_stderr(prod)
    low_confidence = bool(np.any(stderr > np.abs(value)))
    return DerivativeEstimate(value, stderr, low_confidence)


def correlation_time_derivative(
    traj: Trajectory,
    A: Union[int, Callable],
    B: Union[int, Callable],
    grid: LagGrid,
) -> EssentialStatistics:
    """Central-difference slope of the correlation at interior lags."""
    h = traj.lag
    steps = grid.steps(h)
    if steps.min() < 1:
        raise StatsError("interior-lag derivative requires lags >= h")
    a = _as_series(A, traj)
    b = _as_series(B, traj)
    n = traj.n_samples
    K = grid.count
    p, q = a.shape[1], b.shape[1]
    values = np.empty((K, p, q))
    stderr = np.empty((K, p, q))
    for k, L in enumerate(steps):
        m = n - (L + 1)
        if m < MIN_PAIRS:
            raise StatsError(f"too few pairs at lag {grid.lags[k]}")
        diff = (a[L + 1 : L + 1 + m] - a[L - 1 : L - 1 + m]) / (2.0 * h)
        prod = diff[:, :, None] * b[:m, None, :]
        values[k] = prod.mean(axis=0)
        stderr[k] = batch_mean_stderr(prod)
    return EssentialStatistics(grid.lags, values, stderr, n, "dA/dt", "B")


def equilibrium_moments(
    traj: Trajectory, powers: Sequence[int], component: int = 0
):
    """Time-average moments E[x^p] with batch-mean standard errors."""
    x = traj.states[:, component]
    out = []
    for pw in powers:
        series = x ** pw
        out.append((float(series.mean()), float(batch_mean_stderr(series))))
    return out


# ---------------------------------------------------------------------------
# Quadrature moments of the equilibrium density
# ---------------------------------------------------------------------------

# Truncate the integration domain where log p_eq drops this far below its
# maximum (~1e-17 relative tail mass).
LOG_TAIL = 40.0


def morse_unit_moments(eps: float, kBT: float, powers: Sequence[int]) -> np.ndarray:
    """Moments of the rescaled density ~ exp(-U0(y)/kBT), U0 the unit Morse shape.

    This is the a=1, x0=0 member of the Langevin family; by the change of
    variables y = a (x - x0) every position moment of the full family reduces
    to these.
    """
    def neg_log(y):
        return eps * (np.exp(-2.0 * y) - 2.0 * np.exp(-y) + 0.01 * y * y) / kBT

    ymin = optimize.minimize_scalar(neg_log, bounds=(-5.0, 5.0), method="bounded").x
    base = neg_log(ymin)

    def edge(sign):
        y = ymin
        step = 1.0
        while neg_log(y) - base < LOG_TAIL:
            y += sign * step
            step *= 1.5
        return y

    lo, hi = edge(-1.0), edge(+1.0)
    dens = lambda y: np.exp(-(neg_log(y) - base))
    norm, _ = integrate.quad(dens, lo, hi, limit=200, epsabs=0, epsrel=1e-11)
    out = []
    for pw in powers:
        val, _ = integrate.quad(lambda y: y ** pw * dens(y), lo, hi,
                                limit=200, epsabs=0, epsrel=1e-11)
        out.append(val / norm)
    return np.asarray(out)


def quadrature_moments(
    model: ModelSpec, theta, powers: Sequence[int], component: int = 0
) -> np.ndarray:
    """Position moments of p_eq by adaptive quadrature on a truncated domain."""
    p = model.check_theta(theta)
    if model.log_peq is None:
        raise UnsupportedCapabilityError(
            f"model '{model.name}' does not declare equilibrium knowledge"
        )
    if model.name in ("langevin_morse", "harmonic"):
        return _moments_1d(model, p, powers)
    if model.name == "triple_well":
        return _moments_2d(model, p, powers, component)
    raise UnsupportedCapabilityError(
        f"quadrature moments not implemented for model '{model.name}'"
    )


def _moments_1d(model, p, powers):
    if model.name == "harmonic":
        gamma, kBT, k, x0 = p
        neg_log = lambda x: 0.5 * k * (x - x0) ** 2 / kBT
        center = x0
    else:
        gamma, kBT, eps, a, x0 = p
        pot = model.extras["potential"]
        neg_log = lambda x: pot(x, p) / kBT
        center = optimize.minimize_scalar(
            neg_log, bounds=(x0 - 5.0 / a, x0 + 5.0 / a), method="bounded"
        ).x
    base = neg_log(center)

    def edge(sign):
        x = center
        step = 0.1
        while neg_log(x) - base < LOG_TAIL:
            x += sign * step
            step *= 1.5
        return x

    lo, hi = edge(-1.0), edge(+1.0)
    dens = lambda x: np.exp(-(neg_log(x) - base))
    norm, err = integrate.quad(dens, lo, hi, limit=200, epsabs=0, epsrel=1e-11)
    if norm <= 0 or not np.isfinite(norm):
        raise StatsError("non-normalizable equilibrium density")
    out = []
    for pw in powers:
        val, _ = integrate.quad(lambda x: x ** pw * dens(x), lo, hi,
                                limit=200, epsabs=0, epsrel=1e-11)
        out.append(val / norm)
    return np.asarray(out)


def _panel_gauss_grid(lo, hi, panel_width, n_gauss):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    n_panels = max(1, int(np.ceil((hi - lo) / panel_width)))
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _moments_2d(model, p, powers, component):
    # Tensor-product composite Gauss-Legendre on the truncated support; the
    # bump features have width O(a), so 0.25-wide panels with 12 points each
    # give well below 1e-8 relative error.
    pot = model.extras["potential"]
    kBT = p[model.param_names.index("kBT")]
    a = p[model.param_names.index("a")]
    qc = np.array([a, a / np.sqrt(3.0)])
    radius = np.sqrt(LOG_TAIL * kBT / 0.2) + 3.0
    n1, w1 = _panel_gauss_grid(qc[0] - radius, qc[0] + radius, 0.25 * a, 12)
    n2, w2 = _panel_gauss_grid(qc[1] - radius, qc[1] + radius, 0.25 * a, 12)
    G1, G2 = np.meshgrid(n1, n2, indexing="ij")
    neg_log = pot(np.stack([G1, G2], axis=-1), p) / kBT
    base = float(neg_log.min())
    dens = np.exp(-(neg_log - base))
    W = w1[:, None] * w2[None, :]
    norm = float(np.sum(W * dens))
    if norm <= 0 or not np.isfinite(norm):
        raise StatsError("non-normalizable equilibrium density")
    coord = G1 if component == 0 else G2
    return np.asarray([float(np.sum(W * coord ** pw * dens)) / norm for pw in powers])


# ---------------------------------------------------------------------------
# Rational (matrix-exponential) response ansatz -- diagnostic only
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResponseAnsatz:
    """Order-m exponential-of-companion-matrix fit g(t) = e1^T exp(tG) alpha."""

    order: int
    companion: np.ndarray   # (m, m)
    weights: np.ndarray     # (m,)
    residual: float         # relative L2 residual on the fitted grid

    def __call__(self, t):
        from scipy.linalg import expm

        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array(
            [expm(ti * self.companion)[0] @ self.weights for ti in t]
        )
        return out if out.size > 1 else float(out[0])


def fit_response_ansatz(es: EssentialStatistics, order: int) -> ResponseAnsatz:
    """Fit the rational-approximation ansatz to scalar correlation data.

    Uses a Prony-type linear method on the (uniform) lag grid: a linear
    recurrence gives the modes, a linear solve gives the amplitudes, and the
    companion form is reconstructed from the characteristic polynomial.
    Matrix-valued statistics are not supported.
    """
    m = int(order)
    if es.values.shape[1:] != (1, 1):
        raise UnsupportedCapabilityError("ansatz fitting supports scalar statistics only")
    k = es.scalar_values
    K = k.size
    if K < 2 * m:
        raise StatsError(f"need at least {2 * m} lags for an order-{m} fit")
    dt = np.diff(es.lags)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise StatsError("ansatz fitting requires a uniform lag grid")
    dt = dt[0]

    # linear recurrence k_{j+m} = sum_l c_l k_{j+m-l}
    rows = np.column_stack([k[m - l : K - l] for l in range(1, m + 1)])
    rhs = k[m:]
    c, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    cond = np.linalg.cond(rows)
    if cond > 1e12:
        warnings.warn(f"ill-conditioned ansatz fit (cond={cond:.2e})", stacklevel=2)

    roots = np.roots(np.concatenate([[1.0], -c]))
    roots = np.where(np.abs(roots) < 1e-12, 1e-12, roots)
    lam = np.log(roots.astype(complex)) / dt

    # amplitudes: k(t_j) = sum_i w_i exp(lam_i t_j)
    E = np.exp(np.outer(es.lags, lam))
    w, *_ = np.linalg.lstsq(E, k.astype(complex), rcond=None)
    fit_vals = (E @ w).real
    residual = float(np.linalg.norm(fit_vals - k) / max(np.linalg.norm(k), 1e-300))

    # companion matrix with characteristic polynomial prod (s - lam_i)
    charpoly = np.poly(lam)  # s^m + a_1 s^{m-1} + ... + a_m
    betas = -charpoly[1:].real
    G = np.zeros((m, m))
    G[:, 0] = betas
    if m > 1:
        G[: m - 1, 1:] = np.eye(m - 1)

    # weights alpha from the derivative data: e1^T G^j alpha = g^(j)(0)
    obs = np.zeros((m, m))
    row = np.zeros(m)
    row[0] = 1.0
    derivs = np.array([np.sum(w * lam ** j) for j in range(m)]).real
    for j in range(m):
        obs[j] = row
        row = row @ G
    alpha = np.linalg.solve(obs, derivs)

    ans = ResponseAnsatz(m, G, alpha, residual)
    if not np.all(np.isfinite(ans(es.lags))):
        raise StatsError("ansatz evaluation produced non-finite values")
    return ans


# ---------------------------------------------------------------------------
# CSV persistence (contract between stats and surrogate/solver)
# ---------------------------------------------------------------------------

def save_statistics_csv(es: EssentialStatistics, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "i", "j", "value", "stderr"])
        K, p, q = es.values.shape
        for k in range(K):
            for i in range(p):
                for j in range(q):
                    writer.writerow([
                        repr(float(es.lags[k])), i, j,
                        repr(float(es.values[k, i, j])),
                        repr(float(es.stderr[k, i, j])),
                    ])
    meta = {
        "observable": es.observable,
        "conjugate": es.conjugate,
        "n_samples": int(es.n_samples),
    }
    import json

    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_statistics_csv(path) -> EssentialStatistics:
    import json

    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["lag"]), int(row["i"]), int(row["j"]),
                         float(row["value"]), float(row["stderr"])))
    if not rows:
        raise StatsError(f"{path}: empty statistics file")
    lags = sorted({r[0] for r in rows})
    p = max(r[1] for r in rows) + 1
    q = max(r[2] for r in rows) + 1
    values = np.empty((len(lags), p, q))
    stderr = np.empty((len(lags), p, q))
    lag_index = {lag: k for k, lag in enumerate(lags)}
    for lag, i, j, val, se in rows:
        values[lag_index[lag], i, j] = val
        stderr[lag_index[lag], i, j] = se
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta = {"observable": "A", "conjugate": "B", "n_samples": 0}
    if meta_path.exists():
        with open(meta_path) as fh:
            meta.update(json.load(fh))
    return EssentialStatistics(np.asarray(lags), values, stderr,
                               meta["n_samples"], meta["observable"], meta["conjugate"])
