"""Parametrized Ito diffusions: generic interface plus the concrete models.

A model is described by its drift b(x; theta), diffusion sigma(x; theta) and,
when available, the equilibrium log-density log p_eq(x; theta) up to an
additive constant.  Three instances are provided:

* ``langevin_morse_model`` -- a particle in a Morse potential with a weak
  quadratic retaining term, damped and stochastically forced,
* ``triple_well_model`` -- a 2-D stochastically forced gradient flow with a
  skew-symmetric mobility perturbation and a triple-well potential,
* ``harmonic_test_model`` -- a linear (Ornstein-Uhlenbeck) variant of the
  Langevin model used as an analytically solvable oracle in tests.

All evaluation functions are pure and vectorized over a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ModelError, UnsupportedCapabilityError

__all__ = [
    "ParameterBox",
    "ParameterVector",
    "ModelSpec",
    "langevin_morse_model",
    "triple_well_model",
    "harmonic_test_model",
    "get_model",
    "eval_drift",
    "eval_log_peq",
    "conjugate_B",
]

# Kernel codes understood by the compiled integrators in respfit.sde.
KERNEL_HARMONIC = 0
KERNEL_LANGEVIN_MORSE = 1
KERNEL_TRIPLE_WELL = 2


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned physical parameter domain with an affine map to [-1,1]^N."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise ModelError("box bounds must have equal length")
        if not np.all(lower < upper):
            raise ModelError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, theta, rtol: float = 1e-12) -> bool:
        theta = np.asarray(theta, dtype=float)
        pad = rtol * (self.upper - self.lower)
        return bool(np.all(theta >= self.lower - pad) and np.all(theta <= self.upper + pad))

    def to_cube(self, theta):
        """Map physical parameters to the canonical cube [-1, 1]^N."""
        theta = np.asarray(theta, dtype=float)
        return (2.0 * theta - (self.upper + self.lower)) / (self.upper - self.lower)

    def from_cube(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * ((self.upper - self.lower) * u + (self.upper + self.lower))

    def cube_jacobian(self) -> np.ndarray:
        """d(cube)/d(physical), the diagonal of the affine map."""
        return 2.0 / (self.upper - self.lower)

    def subbox(self, indices: Sequence[int]) -> "ParameterBox":
        idx = list(indices)
        return ParameterBox(self.lower[idx], self.upper[idx])


@dataclass(frozen=True)
class ParameterVector:
    """Named parameter values for one model."""

    values: np.ndarray
    names: tuple

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        names = tuple(self.names)
        if values.size != len(names):
            raise ModelError(f"expected {len(names)} parameter values, got {values.size}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def replace(self, **updates) -> "ParameterVector":
        values = self.values.copy()
        for name, value in updates.items():
            values[self.names.index(name)] = value
        return ParameterVector(values, self.names)

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class ModelSpec:
    """A parametrized Ito diffusion dX = b(X;theta) dt + sigma(X;theta) dW."""

    name: str
    dim: int
    noise_dim: int
    param_names: tuple
    box: ParameterBox
    drift: Callable
    diffusion: Callable
    log_peq: Optional[Callable] = None
    grad_log_peq: Optional[Callable] = None
    drift_jac_x: Optional[Callable] = None
    drift_dtheta: Optional[Callable] = None
    diffusion_dtheta: Optional[Callable] = None
    default_state: Optional[Callable] = None
    kernel_code: Optional[int] = None
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def params(self, theta) -> ParameterVector:
        """Build a ParameterVector from an array, dict or ParameterVector."""
        if isinstance(theta, ParameterVector):
            if theta.names != self.param_names:
                raise ModelError(
                    f"parameter names {theta.names} do not match model {self.param_names}"
                )
            return theta
        if isinstance(theta, dict):
            missing = set(self.param_names) - set(theta)
            extra = set(theta) - set(self.param_names)
            if missing or extra:
                raise ModelError(f"bad parameter names: missing={missing}, unknown={extra}")
            values = np.array([theta[n] for n in self.param_names], dtype=float)
            return ParameterVector(values, self.param_names)
        return ParameterVector(np.asarray(theta, dtype=float), self.param_names)

    def check_theta(self, theta) -> np.ndarray:
        p = self.params(theta).values
        if not self.box.contains(p):
            raise ModelError(f"theta {p} outside the physical box of model '{self.name}'")
        return p


# ---------------------------------------------------------------------------
# Langevin / Morse model
# ---------------------------------------------------------------------------

def morse_unit_potential(u):
    """U0(u) = eps-free shape: exp(-2u) - 2 exp(-u) + 0.01 u^2 scaled later."""
    u = np.asarray(u, dtype=float)
    return np.exp(-2.0 * u) - 2.0 * np.exp(-u) + 0.01 * u * u


def _morse_U(x, p):
    gamma, kBT, eps, a, x0 = p
    u = a * (np.asarray(x, dtype=float) - x0)
    return eps * morse_unit_potential(u)


def _morse_dU(x, p):
    gamma, kBT, eps, a, x0 = p
    u = a * (np.asarray(x, dtype=float) - x0)
    return a * eps * (-2.0 * np.exp(-2.0 * u) + 2.0 * np.exp(-u) + 0.02 * u)


def _morse_d2U(x, p):
    gamma, kBT, eps, a, x0 = p
    u = a * (np.asarray(x, dtype=float) - x0)
    return a * a * eps * (4.0 * np.exp(-2.0 * u) - 2.0 * np.exp(-u) + 0.02)


def _langevin_drift(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    gamma = p[0]
    return np.stack([v, -_morse_dU(x, p) - gamma * v], axis=-1)


def _langevin_diffusion(state, p):
    gamma, kBT = p[0], p[1]
    return np.array([[0.0], [np.sqrt(2.0 * gamma * kBT)]])


def _langevin_log_peq(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    kBT = p[1]
    return -(_morse_U(x, p) + 0.5 * v * v) / kBT


def _langevin_grad_log_peq(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    kBT = p[1]
    return np.stack([-_morse_dU(x, p) / kBT, -v / kBT], axis=-1)


def _langevin_drift_jac_x(state, p):
    state = np.asarray(state, dtype=float)
    x = state[..., 0]
    gamma = p[0]
    jac = np.zeros(state.shape[:-1] + (2, 2))
    jac[..., 0, 1] = 1.0
    jac[..., 1, 0] = -_morse_d2U(x, p)
    jac[..., 1, 1] = -gamma
    return jac


def _langevin_drift_dtheta(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    gamma, kBT, eps, a, x0 = p
    u = a * (x - x0)
    dU0 = -2.0 * np.exp(-2.0 * u) + 2.0 * np.exp(-u) + 0.02 * u
    d2U0 = 4.0 * np.exp(-2.0 * u) - 2.0 * np.exp(-u) + 0.02
    out = np.zeros(state.shape[:-1] + (2, 5))
    out[..., 1, 0] = -v                        # gamma
    out[..., 1, 2] = -a * dU0                  # eps: U' is linear in eps
    out[..., 1, 3] = -eps * (dU0 + u * d2U0)   # a
    out[..., 1, 4] = a * a * eps * d2U0        # x0
    return out


def _langevin_diffusion_dtheta(p):
    gamma, kBT = p[0], p[1]
    out = np.zeros((2, 1, 5))
    s = np.sqrt(2.0 * gamma * kBT)
    out[1, 0, 0] = kBT / s
    out[1, 0, 1] = gamma / s
    return out


def langevin_morse_model() -> ModelSpec:
    """Damped particle in a shifted Morse potential, state (x, v)."""
    return ModelSpec(
        name="langevin_morse",
        dim=2,
        noise_dim=1,
        param_names=("gamma", "kBT", "eps", "a", "x0"),
        box=ParameterBox([0.01, 0.05, 0.1, 5.0, -1.0], [10.0, 5.0, 0.4, 15.0, 1.0]),
        drift=_langevin_drift,
        diffusion=_langevin_diffusion,
        log_peq=_langevin_log_peq,
        grad_log_peq=_langevin_grad_log_peq,
        drift_jac_x=_langevin_drift_jac_x,
        drift_dtheta=_langevin_drift_dtheta,
        diffusion_dtheta=_langevin_diffusion_dtheta,
        default_state=lambda p: np.array([p[4], 0.0]),
        kernel_code=KERNEL_LANGEVIN_MORSE,
        extras={"potential": _morse_U, "potential_grad": _morse_dU,
                "potential_hess": _morse_d2U},
    )


# ---------------------------------------------------------------------------
# Harmonic (OU) test model: same structure with U = 0.5 k (x - x0)^2
# ---------------------------------------------------------------------------

def _harmonic_drift(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    gamma, kBT, k, x0 = p
    return np.stack([v, -k * (x - x0) - gamma * v], axis=-1)


def _harmonic_log_peq(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    gamma, kBT, k, x0 = p
    return -(0.5 * k * (x - x0) ** 2 + 0.5 * v * v) / kBT


def _harmonic_grad_log_peq(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    gamma, kBT, k, x0 = p
    return np.stack([-k * (x - x0) / kBT, -v / kBT], axis=-1)


def _harmonic_drift_jac_x(state, p):
    state = np.asarray(state, dtype=float)
    gamma, kBT, k, x0 = p
    jac = np.zeros(state.shape[:-1] + (2, 2))
    jac[..., 0, 1] = 1.0
    jac[..., 1, 0] = -k
    jac[..., 1, 1] = -gamma
    return jac


def _harmonic_drift_dtheta(state, p):
    state = np.asarray(state, dtype=float)
    x, v = state[..., 0], state[..., 1]
    gamma, kBT, k, x0 = p
    out = np.zeros(state.shape[:-1] + (2, 4))
    out[..., 1, 0] = -v
    out[..., 1, 2] = -(x - x0)
    out[..., 1, 3] = k
    return out


def _harmonic_diffusion_dtheta(p):
    gamma, kBT = p[0], p[1]
    out = np.zeros((2, 1, 4))
    s = np.sqrt(2.0 * gamma * kBT)
    out[1, 0, 0] = kBT / s
    out[1, 0, 1] = gamma / s
    return out


def harmonic_test_model() -> ModelSpec:
    """Linear Langevin oscillator; every statistic has a closed form (oracle)."""
    return ModelSpec(
        name="harmonic",
        dim=2,
        noise_dim=1,
        param_names=("gamma", "kBT", "k", "x0"),
        box=ParameterBox([0.01, 0.05, 0.1, -5.0], [20.0, 10.0, 50.0, 5.0]),
        drift=_harmonic_drift,
        diffusion=_langevin_diffusion,
        log_peq=_harmonic_log_peq,
        grad_log_peq=_harmonic_grad_log_peq,
        drift_jac_x=_harmonic_drift_jac_x,
        drift_dtheta=_harmonic_drift_dtheta,
        diffusion_dtheta=_harmonic_diffusion_dtheta,
        default_state=lambda p: np.array([p[3], 0.0]),
        kernel_code=KERNEL_HARMONIC,
    )


# ---------------------------------------------------------------------------
# Triple-well gradient system
# ---------------------------------------------------------------------------

# Relative margin below the support edge at which the bump is truncated to 0;
# prevents overflow of 1/(z^2 - a^2) at the boundary.
_BUMP_EDGE = 1e-12


def bump(z, a):
    """Compactly supported C-infinity bump 10*exp(1/(z^2-a^2)) on (-a, a)."""
    z = np.asarray(z, dtype=float)
    w = z * z - a * a
    inside = w < -_BUMP_EDGE * a * a
    wsafe = np.where(inside, w, -1.0)
    return np.where(inside, 10.0 * np.exp(1.0 / wsafe), 0.0)


def bump_d(z, a):
    """First derivative of ``bump`` with respect to z."""
    z = np.asarray(z, dtype=float)
    w = z * z - a * a
    inside = w < -_BUMP_EDGE * a * a
    wsafe = np.where(inside, w, -1.0)
    val = 10.0 * np.exp(1.0 / wsafe) * (-2.0 * z / (wsafe * wsafe))
    return np.where(inside, val, 0.0)


def bump_d2(z, a):
    z = np.asarray(z, dtype=float)
    w = z * z - a * a
    inside = w < -_BUMP_EDGE * a * a
    wsafe = np.where(inside, w, -1.0)
    w2 = wsafe * wsafe
    val = 10.0 * np.exp(1.0 / wsafe) * (
        4.0 * z * z / (w2 * w2) - 2.0 / w2 + 8.0 * z * z / (w2 * wsafe)
    )
    return np.where(inside, val, 0.0)


def bump_da(z, a):
    """Partial derivative of ``bump`` with respect to the width parameter a."""
    z = np.asarray(z, dtype=float)
    w = z * z - a * a
    inside = w < -_BUMP_EDGE * a * a
    wsafe = np.where(inside, w, -1.0)
    val = 10.0 * np.exp(1.0 / wsafe) * (2.0 * a / (wsafe * wsafe))
    return np.where(inside, val, 0.0)


def bump_dda(z, a):
    """Mixed partial d^2 bump / (dz da)."""
    z = np.asarray(z, dtype=float)
    w = z * z - a * a
    inside = w < -_BUMP_EDGE * a * a
    wsafe = np.where(inside, w, -1.0)
    w2 = wsafe * wsafe
    # d/da [ v(z,a) * (-2z/w^2) ] at fixed z
    val = 10.0 * np.exp(1.0 / wsafe) * (-4.0 * a * z) * (1.0 / (w2 * w2) + 2.0 / (w2 * wsafe))
    return np.where(inside, val, 0.0)


def _tw_centers(a):
    sqrt3 = np.sqrt(3.0)
    centers = np.array([[0.0, 0.0], [2.0 * a, 0.0], [a, a * sqrt3]])
    dcenters = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, sqrt3]])
    quad_center = np.array([a, a / sqrt3])
    dquad_center = np.array([1.0, 1.0 / sqrt3])
    return centers, dcenters, quad_center, dquad_center


def _tw_coeffs(gamma):
    return np.array([-1.0, -(1.0 - gamma), -(1.0 + gamma)])


def triple_well_potential(state, p):
    state = np.asarray(state, dtype=float)
    d, a, kBT, gamma = p
    centers, _, qc, _ = _tw_centers(a)
    coeffs = _tw_coeffs(gamma)
    x = state[..., 0]
    y = state[..., 1]
    V = np.zeros(np.broadcast(x, y).shape)
    for c, (cx, cy) in zip(coeffs, centers):
        z = (x - cx) ** 2 + (y - cy) ** 2
        V = V + c * bump(z, a)
    V = V + 0.2 * ((x - qc[0]) ** 2 + (y - qc[1]) ** 2)
    return V


def triple_well_grad(state, p):
    """Gradient of the triple-well potential, vectorized over leading axes."""
    state = np.asarray(state, dtype=float)
    d, a, kBT, gamma = p
    centers, _, qc, _ = _tw_centers(a)
    coeffs = _tw_coeffs(gamma)
    x = state[..., 0]
    y = state[..., 1]
    gx = 0.4 * (x - qc[0])
    gy = 0.4 * (y - qc[1])
    for c, (cx, cy) in zip(coeffs, centers):
        dx = x - cx
        dy = y - cy
        z = dx * dx + dy * dy
        vp = bump_d(z, a)
        gx = gx + c * vp * 2.0 * dx
        gy = gy + c * vp * 2.0 * dy
    return np.stack([gx, gy], axis=-1)


def triple_well_hess(state, p):
    state = np.asarray(state, dtype=float)
    d, a, kBT, gamma = p
    centers, _, _, _ = _tw_centers(a)
    coeffs = _tw_coeffs(gamma)
    x = state[..., 0]
    y = state[..., 1]
    shape = np.broadcast(x, y).shape
    H = np.zeros(shape + (2, 2))
    H[..., 0, 0] = 0.4
    H[..., 1, 1] = 0.4
    for c, (cx, cy) in zip(coeffs, centers):
        dx = x - cx
        dy = y - cy
        z = dx * dx + dy * dy
        vp = bump_d(z, a)
        vpp = bump_d2(z, a)
        H[..., 0, 0] += c * (4.0 * vpp * dx * dx + 2.0 * vp)
        H[..., 0, 1] += c * 4.0 * vpp * dx * dy
        H[..., 1, 0] += c * 4.0 * vpp * dx * dy
        H[..., 1, 1] += c * (4.0 * vpp * dy * dy + 2.0 * vp)
    return H


def _tw_C(d):
    return np.array([[1.0, -d], [d, 1.0]])


def _tw_drift(state, p):
    d = p[0]
    grad = triple_well_grad(state, p)
    C = _tw_C(d)
    return -np.einsum("ij,...j->...i", C, grad)


def _tw_diffusion(state, p):
    kBT = p[2]
    return np.sqrt(2.0 * kBT) * np.eye(2)


def _tw_log_peq(state, p):
    kBT = p[2]
    return -triple_well_potential(state, p) / kBT


def _tw_grad_log_peq(state, p):
    kBT = p[2]
    return -triple_well_grad(state, p) / kBT


def _tw_drift_jac_x(state, p):
    d = p[0]
    C = _tw_C(d)
    H = triple_well_hess(state, p)
    return -np.einsum("ij,...jk->...ik", C, H)


def _tw_grad_da(state, p):
    """Partial derivative of the potential gradient with respect to a."""
    state = np.asarray(state, dtype=float)
    d, a, kBT, gamma = p
    centers, dcenters, qc, dqc = _tw_centers(a)
    coeffs = _tw_coeffs(gamma)
    x = state[..., 0]
    y = state[..., 1]
    shape = np.broadcast(x, y).shape
    out = np.zeros(shape + (2,))
    out[..., 0] = -0.4 * dqc[0]
    out[..., 1] = -0.4 * dqc[1]
    for c, (cx, cy), (dcx, dcy) in zip(coeffs, centers, dcenters):
        dx = x - cx
        dy = y - cy
        z = dx * dx + dy * dy
        dz_da = -2.0 * (dx * dcx + dy * dcy)
        vp = bump_d(z, a)
        dvp_da = bump_dda(z, a) + bump_d2(z, a) * dz_da
        out[..., 0] += c * (dvp_da * 2.0 * dx - vp * 2.0 * dcx)
        out[..., 1] += c * (dvp_da * 2.0 * dy - vp * 2.0 * dcy)
    return out


def _tw_grad_dgamma(state, p):
    """Partial derivative of the potential gradient with respect to gamma."""
    state = np.asarray(state, dtype=float)
    d, a, kBT, gamma = p
    centers, _, _, _ = _tw_centers(a)
    x = state[..., 0]
    y = state[..., 1]
    shape = np.broadcast(x, y).shape
    out = np.zeros(shape + (2,))
    # d(coeff)/dgamma: well 1 -> +1, well 2 -> -1
    for sign, (cx, cy) in zip((1.0, -1.0), centers[1:]):
        dx = x - cx
        dy = y - cy
        z = dx * dx + dy * dy
        vp = bump_d(z, a)
        out[..., 0] += sign * vp * 2.0 * dx
        out[..., 1] += sign * vp * 2.0 * dy
    return out


def _tw_drift_dtheta(state, p):
    state = np.asarray(state, dtype=float)
    d = p[0]
    C = _tw_C(d)
    grad = triple_well_grad(state, p)
    out = np.zeros(state.shape[:-1] + (2, 4))
    # d: dC/dd = [[0,-1],[1,0]], so db/dd = -[[0,-1],[1,0]] grad
    out[..., 0, 0] = grad[..., 1]
    out[..., 1, 0] = -grad[..., 0]
    ga = _tw_grad_da(state, p)
    gg = _tw_grad_dgamma(state, p)
    out[..., :, 1] = -np.einsum("ij,...j->...i", C, ga)
    out[..., :, 3] = -np.einsum("ij,...j->...i", C, gg)
    return out


def _tw_diffusion_dtheta(p):
    kBT = p[2]
    out = np.zeros((2, 2, 4))
    out[:, :, 2] = np.eye(2) / np.sqrt(2.0 * kBT)
    return out


def triple_well_model() -> ModelSpec:
    """2-D gradient flow with triple-well potential and skewed mobility."""
    return ModelSpec(
        name="triple_well",
        dim=2,
        noise_dim=2,
        param_names=("d", "a", "kBT", "gamma"),
        box=ParameterBox([-0.99, 0.5, 0.1, 0.0], [0.99, 1.5, 5.0, 0.5]),
        drift=_tw_drift,
        diffusion=_tw_diffusion,
        log_peq=_tw_log_peq,
        grad_log_peq=_tw_grad_log_peq,
        drift_jac_x=_tw_drift_jac_x,
        drift_dtheta=_tw_drift_dtheta,
        diffusion_dtheta=_tw_diffusion_dtheta,
        default_state=lambda p: np.array([p[1], p[1] / np.sqrt(3.0)]),
        kernel_code=KERNEL_TRIPLE_WELL,
        extras={"potential": triple_well_potential,
                "potential_grad": triple_well_grad,
                "potential_hess": triple_well_hess,
                "mobility": _tw_C},
    )


_REGISTRY = {
    "langevin_morse": langevin_morse_model,
    "triple_well": triple_well_model,
    "harmonic": harmonic_test_model,
}


def get_model(name: str) -> ModelSpec:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ModelError(f"unknown model '{name}'; known: {sorted(_REGISTRY)}") from None


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def eval_drift(model: ModelSpec, x, theta) -> np.ndarray:
    """Drift field b(x; theta); rejects non-finite output."""
    p = model.check_theta(theta)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ModelError("state must be finite")
    out = model.drift(x, p)
    if not np.all(np.isfinite(out)):
        raise ModelError(
            f"non-finite drift at x={x} for model '{model.name}' (blow-up or bad theta)"
        )
    return out


def eval_log_peq(model: ModelSpec, x, theta) -> np.ndarray:
    """Equilibrium log-density up to an additive constant."""
    if model.log_peq is None:
        raise UnsupportedCapabilityError(
            f"model '{model.name}' does not declare equilibrium knowledge"
        )
    p = model.check_theta(theta)
    return model.log_peq(np.asarray(x, dtype=float), p)


def conjugate_B(model: ModelSpec, x, theta, c) -> np.ndarray:
    """FDT conjugate variable for a constant-in-x forcing direction c.

    B_i(x) = c_i * d/dx_i (-log p_eq(x)).  Non-constant forcing directions
    are out of scope.
    """
    if model.grad_log_peq is None:
        raise UnsupportedCapabilityError(
            f"model '{model.name}' does not declare equilibrium knowledge"
        )
    if callable(c):
        raise UnsupportedCapabilityError("state-dependent forcing directions are unsupported")
    p = model.check_theta(theta)
    c = np.asarray(c, dtype=float)
    if c.shape != (model.dim,):
        raise ModelError(f"forcing direction must have shape ({model.dim},)")
    score = model.grad_log_peq(np.asarray(x, dtype=float), p)
    return -c * score
