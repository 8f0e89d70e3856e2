"""Trajectory generation for the shipped diffusion models.

Long stationary runs are produced by compiled (numba) kernels for the three
registered models; arbitrary ``ModelSpec`` instances fall back to a plain
Euler-Maruyama loop.  All schemes are driven by a single seeded RNG stream
with increments drawn in step order, so rerunning with the same seed gives a
bit-identical trajectory and ``simulate_pair_common_noise`` can share noise
between two runs by seed reuse.

Schemes:

* ``euler_maruyama`` -- first order, any model; also the verification oracle
  at a refined step.
* ``langevin_splitting`` -- symmetric Strang splitting (half-step exact OU
  flow, full velocity-Verlet step, half-step OU) for (x, v) Langevin models.
* ``weak_trapezoidal`` -- two-stage predictor/corrector for gradient systems
  with additive noise, weak second order.

The Langevin kernels integrate the shifted coordinate y = x - x0 internally
(the force only depends on x - x0), which makes the velocity path exactly
independent of the x0 parameter, not merely up to roundoff.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError, SimulationError
from .models import (
    KERNEL_HARMONIC,
    KERNEL_LANGEVIN_MORSE,
    KERNEL_TRIPLE_WELL,
    ModelSpec,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "simulate",
    "simulate_pair_common_noise",
    "save_trajectory",
    "load_trajectory",
]

_SCHEMES = ("euler_maruyama", "langevin_splitting", "weak_trapezoidal")
_BLOWUP = 1.0e8
_MAGIC = b"RESPTRAJ"


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str
    dt: float
    lag: float
    n_samples: int
    burn_in: float = None  # time units; None -> 10% of the sampled span
    seed: int = 0
    initial_state: np.ndarray = None

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ConfigError(f"unknown scheme '{self.scheme}'; known: {_SCHEMES}")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        stride = self.lag / self.dt
        if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
            raise ConfigError(f"lag {self.lag} must be a positive integer multiple of dt {self.dt}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.burn_in is not None and self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")

    @property
    def stride(self) -> int:
        return int(round(self.lag / self.dt))

    def burn_steps(self) -> int:
        if self.burn_in is None:
            # default: 10% of the sampled span
            return int(round(0.1 * self.n_samples * self.stride))
        return int(round(self.burn_in / self.dt))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (n_samples, dim)
    lag: float
    model_name: str
    theta: np.ndarray
    seed: int
    scheme: str
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "states", np.ascontiguousarray(self.states, dtype=np.float64))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def span(self) -> float:
        return (self.n_samples - 1) * self.lag


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _force1d(code, p, y):
    if code == KERNEL_HARMONIC:
        return -p[2] * y
    # Morse with quadratic retainer: U0(u) = eps (e^-2u - 2 e^-u + 0.01 u^2)
    eps = p[2]
    a = p[3]
    u = a * y
    return -a * eps * (-2.0 * np.exp(-2.0 * u) + 2.0 * np.exp(-u) + 0.02 * u)


@njit(cache=True)
def _kern_langevin_splitting(code, p, y0, v0, dt, n_burn, stride, n_samples, seed, out):
    np.random.seed(seed)
    gamma = p[0]
    kBT = p[1]
    x0 = p[3] if code == KERNEL_HARMONIC else p[4]
    c1 = np.exp(-0.5 * gamma * dt)
    c2 = np.sqrt(kBT * (1.0 - c1 * c1))
    y = y0
    v = v0
    rec = 0
    step = 0
    while rec < n_samples:
        v = c1 * v + c2 * np.random.normal()
        v += 0.5 * dt * _force1d(code, p, y)
        y += dt * v
        v += 0.5 * dt * _force1d(code, p, y)
        v = c1 * v + c2 * np.random.normal()
        step += 1
        if abs(y) > _BLOWUP or abs(v) > _BLOWUP:
            return step
        if step > n_burn and (step - n_burn) % stride == 0:
            out[rec, 0] = y + x0
            out[rec, 1] = v
            rec += 1
    return -1


@njit(cache=True)
def _kern_langevin_em(code, p, y0, v0, dt, n_burn, stride, n_samples, seed, out):
    np.random.seed(seed)
    gamma = p[0]
    kBT = p[1]
    x0 = p[3] if code == KERNEL_HARMONIC else p[4]
    amp = np.sqrt(2.0 * gamma * kBT * dt)
    y = y0
    v = v0
    rec = 0
    step = 0
    while rec < n_samples:
        f = _force1d(code, p, y)
        ynew = y + dt * v
        v = v + dt * (f - gamma * v) + amp * np.random.normal()
        y = ynew
        step += 1
        if abs(y) > _BLOWUP or abs(v) > _BLOWUP:
            return step
        if step > n_burn and (step - n_burn) % stride == 0:
            out[rec, 0] = y + x0
            out[rec, 1] = v
            rec += 1
    return -1


@njit(cache=True, inline="always")
def _bump_d_scalar(z, a):
    w = z * z - a * a
    if w < -1e-12 * a * a:
        return 10.0 * np.exp(1.0 / w) * (-2.0 * z / (w * w))
    return 0.0


@njit(cache=True, inline="always")
def _tw_drift_scalar(p, x1, x2):
    d = p[0]
    a = p[1]
    gw = p[3]
    sqrt3 = np.sqrt(3.0)
    g1 = 0.4 * (x1 - a)
    g2 = 0.4 * (x2 - a / sqrt3)
    # well at (0, 0)
    z = x1 * x1 + x2 * x2
    vp = _bump_d_scalar(z, a)
    g1 += -1.0 * vp * 2.0 * x1
    g2 += -1.0 * vp * 2.0 * x2
    # well at (2a, 0)
    dx = x1 - 2.0 * a
    z = dx * dx + x2 * x2
    vp = _bump_d_scalar(z, a)
    g1 += -(1.0 - gw) * vp * 2.0 * dx
    g2 += -(1.0 - gw) * vp * 2.0 * x2
    # well at (a, a sqrt 3)
    dx = x1 - a
    dy = x2 - a * sqrt3
    z = dx * dx + dy * dy
    vp = _bump_d_scalar(z, a)
    g1 += -(1.0 + gw) * vp * 2.0 * dx
    g2 += -(1.0 + gw) * vp * 2.0 * dy
    b1 = -(g1 - d * g2)
    b2 = -(d * g1 + g2)
    return b1, b2


@njit(cache=True)
def _kern_tw_weak_trapezoidal(p, x10, x20, dt, n_burn, stride, n_samples, seed, out):
    np.random.seed(seed)
    kBT = p[2]
    s = np.sqrt(2.0 * kBT)
    hdt = 0.5 * dt
    amp = s * np.sqrt(hdt)
    x1 = x10
    x2 = x20
    rec = 0
    step = 0
    while rec < n_samples:
        b1, b2 = _tw_drift_scalar(p, x1, x2)
        y1 = x1 + b1 * hdt + amp * np.random.normal()
        y2 = x2 + b2 * hdt + amp * np.random.normal()
        c1, c2 = _tw_drift_scalar(p, y1, y2)
        x1 = y1 + (2.0 * c1 - b1) * hdt + amp * np.random.normal()
        x2 = y2 + (2.0 * c2 - b2) * hdt + amp * np.random.normal()
        step += 1
        if abs(x1) > _BLOWUP or abs(x2) > _BLOWUP:
            return step
        if step > n_burn and (step - n_burn) % stride == 0:
            out[rec, 0] = x1
            out[rec, 1] = x2
            rec += 1
    return -1


@njit(cache=True)
def _kern_tw_em(p, x10, x20, dt, n_burn, stride, n_samples, seed, out):
    np.random.seed(seed)
    kBT = p[2]
    amp = np.sqrt(2.0 * kBT * dt)
    x1 = x10
    x2 = x20
    rec = 0
    step = 0
    while rec < n_samples:
        b1, b2 = _tw_drift_scalar(p, x1, x2)
        x1 = x1 + b1 * dt + amp * np.random.normal()
        x2 = x2 + b2 * dt + amp * np.random.normal()
        step += 1
        if abs(x1) > _BLOWUP or abs(x2) > _BLOWUP:
            return step
        if step > n_burn and (step - n_burn) % stride == 0:
            out[rec, 0] = x1
            out[rec, 1] = x2
            rec += 1
    return -1


def _python_euler_maruyama(model, p, state0, cfg):
    """Fallback for models without a compiled kernel."""
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.dt
    sq = np.sqrt(dt)
    stride = cfg.stride
    n_burn = cfg.burn_steps()
    out = np.empty((cfg.n_samples, model.dim))
    x = np.array(state0, dtype=float)
    rec = 0
    step = 0
    while rec < cfg.n_samples:
        b = model.drift(x, p)
        sig = model.diffusion(x, p)
        x = x + dt * b + sq * sig @ rng.standard_normal(model.noise_dim)
        step += 1
        if np.max(np.abs(x)) > _BLOWUP:
            raise SimulationError(f"blow-up at step {step}", step=step)
        if step > n_burn and (step - n_burn) % stride == 0:
            out[rec] = x
            rec += 1
    return out


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def _initial_state(model, p, cfg):
    if cfg.initial_state is not None:
        state0 = np.asarray(cfg.initial_state, dtype=float)
        if state0.shape != (model.dim,):
            raise ConfigError(f"initial state must have shape ({model.dim},)")
        return state0
    if model.default_state is not None:
        return np.asarray(model.default_state(p), dtype=float)
    return np.zeros(model.dim)


def _check_scheme(model, scheme):
    if scheme == "langevin_splitting" and model.kernel_code not in (
        KERNEL_HARMONIC,
        KERNEL_LANGEVIN_MORSE,
    ):
        raise ConfigError("langevin_splitting requires the (x, v) Langevin structure")
    if scheme == "weak_trapezoidal" and model.kernel_code != KERNEL_TRIPLE_WELL:
        raise ConfigError("weak_trapezoidal is only wired for the gradient-system kernel")


def simulate(model: ModelSpec, theta, cfg: IntegratorConfig) -> Trajectory:
    """Generate a stationary trajectory sampled every ``cfg.lag`` after burn-in."""
    p = model.check_theta(theta)
    _check_scheme(model, cfg.scheme)
    state0 = _initial_state(model, p, cfg)
    out = np.empty((cfg.n_samples, model.dim))
    n_burn = cfg.burn_steps()
    code = model.kernel_code

    if code in (KERNEL_HARMONIC, KERNEL_LANGEVIN_MORSE):
        x0 = p[3] if code == KERNEL_HARMONIC else p[4]
        y0 = state0[0] - x0
        kern = (
            _kern_langevin_splitting
            if cfg.scheme == "langevin_splitting"
            else _kern_langevin_em
        )
        bad = kern(code, p, y0, state0[1], cfg.dt, n_burn, cfg.stride,
                   cfg.n_samples, cfg.seed, out)
    elif code == KERNEL_TRIPLE_WELL:
        kern = (
            _kern_tw_weak_trapezoidal
            if cfg.scheme == "weak_trapezoidal"
            else _kern_tw_em
        )
        bad = kern(p, state0[0], state0[1], cfg.dt, n_burn, cfg.stride,
                   cfg.n_samples, cfg.seed, out)
    else:
        out = _python_euler_maruyama(model, p, state0, cfg)
        bad = -1

    if bad >= 0:
        raise SimulationError(
            f"blow-up at step {bad} (|state| > {_BLOWUP:g}); "
            "dt may be too large or theta unstable",
            step=int(bad),
        )
    return Trajectory(out, cfg.lag, model.name, p, cfg.seed, cfg.scheme, cfg.dt)


def simulate_pair_common_noise(model, thetas, cfg, initial_states):
    """Two trajectories driven by the identical noise realization.

    ``thetas`` is either a single parameter set (used for both runs) or a
    pair.  Both runs reuse ``cfg.seed``, so with a single RNG stream and a
    fixed draw order the Wiener increments coincide.
    """
    if isinstance(thetas, (tuple, list)) and len(thetas) == 2 and not np.isscalar(thetas[0]):
        theta_a, theta_b = thetas
    else:
        theta_a = theta_b = thetas
    init_a, init_b = initial_states
    traj_a = simulate(model, theta_a, replace(cfg, initial_state=np.asarray(init_a, float)))
    traj_b = simulate(model, theta_b, replace(cfg, initial_state=np.asarray(init_b, float)))
    return traj_a, traj_b


# ---------------------------------------------------------------------------
# Persistence: flat binary + sidecar metadata, CSV export
# ---------------------------------------------------------------------------

def save_trajectory(traj: Trajectory, path) -> None:
    """Write the 64-byte header + row-major float64 states, plus metadata."""
    path = Path(path)
    header = struct.pack("<8sqqdq", _MAGIC, traj.dim, traj.n_samples, traj.lag, traj.seed)
    header += b"\x00" * (64 - len(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(traj.states.astype("<f8").tobytes())
    meta = {
        "model": traj.model_name,
        "theta": [float(v) for v in traj.theta],
        "scheme": traj.scheme,
        "dt": traj.dt,
        "lag": traj.lag,
        "seed": int(traj.seed),
        "n_samples": int(traj.n_samples),
        "dim": int(traj.dim),
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(64)
        if len(header) < 64 or header[:8] != _MAGIC:
            raise ConfigError(f"{path} is not a respfit trajectory file")
        _, dim, n_samples, lag, seed = struct.unpack("<8sqqdq", header[:40])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != dim * n_samples:
        raise ConfigError(f"{path}: truncated payload ({data.size} values, "
                          f"expected {dim * n_samples})")
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    if not meta_path.exists():
        raise ConfigError(f"missing sidecar metadata {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    return Trajectory(
        data.reshape(n_samples, dim),
        lag,
        meta["model"],
        np.asarray(meta["theta"], dtype=float),
        seed,
        meta["scheme"],
        meta["dt"],
    )


def export_csv(traj: Trajectory, path, max_rows: int = 1_000_000) -> None:
    if traj.n_samples > max_rows:
        raise ConfigError(f"CSV export limited to {max_rows} rows; trajectory has "
                          f"{traj.n_samples}")
    cols = ",".join(f"x{i}" for i in range(traj.dim))
    np.savetxt(path, traj.states, delimiter=",", header=cols, comments="", fmt="%.17g")
