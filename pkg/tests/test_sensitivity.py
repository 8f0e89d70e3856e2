"""A priori spread and pathwise-derivative sensitivity diagnostics."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from respfit.errors import StatsError, UnsupportedCapabilityError
from respfit.models import ModelSpec, ParameterBox
from respfit.sde import IntegratorConfig, simulate
from respfit.sensitivity import (
    SensitivityReport,
    apriori_spread,
    pathwise_derivative,
    save_sensitivity_csv,
)
from respfit.stats import LagGrid, two_point_correlation
from respfit.surrogate import CollocationDesign, MultiIndexSet

HARM_THETA = np.array([2.0, 1.0, 4.0, 0.0])


# ---------------------------------------------------------------------------
# A priori spread
# ---------------------------------------------------------------------------

def test_spread_linear_function():
    # statistic = first cube coordinate: full node range along axis 0,
    # exactly zero along axis 1
    design = CollocationDesign(MultiIndexSet(2, 2), 5)
    vals = np.column_stack([design.nodes[:, 0]] * 3)
    rep = apriori_spread(vals, design, np.array([0.1, 0.2, 0.3]))
    rng = design.axis_nodes[-1] - design.axis_nodes[0]
    assert np.allclose(rep.curves[0], rng, atol=1e-14)
    assert np.allclose(rep.curves[1], 0.0, atol=1e-14)


def test_spread_constant_statistic():
    design = CollocationDesign(MultiIndexSet(2, 2), 4)
    rep = apriori_spread(np.full((design.n_nodes, 2), 1.7), design,
                         np.array([0.1, 0.2]))
    assert np.all(rep.curves == 0.0)


def test_spread_validation():
    design = CollocationDesign(MultiIndexSet(2, 2), 4)
    with pytest.raises(StatsError):
        apriori_spread(np.zeros((3, 2)), design, np.array([0.1, 0.2]))
    with pytest.raises(StatsError):
        apriori_spread(np.zeros((design.n_nodes, 2)), design, np.array([0.1]))


def test_spread_x0_axis_exactly_zero(harmonic):
    # velocity statistics do not depend on x0 (the splitting integrator works
    # in shifted coordinates), so with a shared seed the x0-axis spread of the
    # velocity autocorrelation vanishes bitwise while the k-axis spread does not
    box = ParameterBox([2.0, -1.0], [8.0, 1.0])   # (k, x0)
    design = CollocationDesign(MultiIndexSet(2, 2), 3)
    grid = LagGrid([0.1, 0.3, 0.6])
    vals = np.empty((design.n_nodes, grid.count))
    for i, u in enumerate(design.nodes):
        k, x0 = box.from_cube(u)
        theta = np.array([2.0, 1.0, k, x0])
        cfg = IntegratorConfig("langevin_splitting", 2e-3, 0.02, 20_000,
                               burn_in=10.0, seed=42)
        traj = simulate(harmonic, theta, cfg)
        vals[i] = two_point_correlation(traj, 1, 1, grid).scalar_values
    rep = apriori_spread(vals, design, grid.lags, ["k", "x0"])
    assert np.all(rep.curves[0] > 0.0)
    assert np.all(rep.curves[1] == 0.0)


# ---------------------------------------------------------------------------
# Pathwise derivatives
# ---------------------------------------------------------------------------

def test_pathwise_x0_fixed_point(harmonic):
    # Y = (1, 0) solves the x0 sensitivity equation exactly: the RK4 update
    # is identically zero in floating point, so the curve is constant bitwise
    rep = pathwise_derivative(harmonic, HARM_THETA, "x0", ensemble_size=3,
                              horizon=0.05, dt=1e-3, seed=0,
                              y0=np.array([1.0, 0.0]))
    assert np.all(rep.curves[0] == 1.0)
    assert np.all(rep.curves[1] == 0.0)
    assert np.all(rep.abs_curves[0] == 1.0)


def _pitchfork_model():
    # deterministic 1-D test model dx = (mu x - x^3) dt: with zero diffusion
    # the pathwise derivative has an ODE oracle
    return ModelSpec(
        name="pitchfork",
        dim=1,
        noise_dim=1,
        param_names=("mu",),
        box=ParameterBox([0.0], [2.0]),
        drift=lambda s, p: p[0] * s - s ** 3,
        diffusion=lambda s, p: np.array([[0.0]]),
        drift_jac_x=lambda s, p: (p[0] - 3.0 * np.asarray(s) ** 2)[..., None],
        drift_dtheta=lambda s, p: np.asarray(s)[..., None],
        diffusion_dtheta=lambda p: np.zeros((1, 1, 1)),
        default_state=lambda p: np.array([0.5]),
    )


def test_pathwise_ode_oracle():
    model = _pitchfork_model()
    mu = 1.2
    horizon = 1.0

    def rhs(t, z, m):
        x, y = z
        return [m * x - x ** 3, (m - 3 * x ** 2) * y + x]

    sol = solve_ivp(rhs, (0, horizon), [0.5, 0.0], args=(mu,),
                    rtol=1e-10, atol=1e-12)
    y_exact = sol.y[1, -1]

    rep = pathwise_derivative(model, np.array([mu]), "mu", ensemble_size=1,
                              horizon=horizon, dt=2e-4, seed=0)
    assert rep.curves[0, -1] == pytest.approx(y_exact, rel=1e-3)

    # finite-difference cross-check: d x(T; mu) / d mu
    h = 1e-5
    ends = []
    for m in (mu - h, mu + h):
        s = solve_ivp(lambda t, z: [m * z[0] - z[0] ** 3], (0, horizon),
                      [0.5], rtol=1e-11, atol=1e-13)
        ends.append(s.y[0, -1])
    fd = (ends[1] - ends[0]) / (2 * h)
    assert rep.curves[0, -1] == pytest.approx(fd, rel=1e-3)


def test_pathwise_harmonic_k_mean_oracle(harmonic):
    # E[Y_k(t)] = d/dk expm(A(k) t) X0 for the linear model; low temperature
    # and a 2000-path ensemble keep the Monte Carlo error small
    theta = np.array([2.0, 0.05, 4.0, 0.0])
    X0 = np.array([1.0, 0.0])
    horizon, dt = 0.5, 1e-3
    rep = pathwise_derivative(harmonic, theta, "k", ensemble_size=2000,
                              horizon=horizon, dt=dt, seed=5,
                              initial_state=X0)

    def A(k):
        return np.array([[0.0, 1.0], [-k, -theta[0]]])

    h = 1e-6
    for t in (0.1, 0.25, 0.5):
        fd = (expm(A(4.0 + h) * t) @ X0 - expm(A(4.0 - h) * t) @ X0) / (2 * h)
        i = int(round(t / dt))
        assert np.allclose(rep.curves[:, i], fd, atol=0.02)


def test_pathwise_diffusion_parameter_unsupported(harmonic):
    for name in ("kBT", "gamma"):
        with pytest.raises(UnsupportedCapabilityError):
            pathwise_derivative(harmonic, HARM_THETA, name,
                                ensemble_size=2, horizon=0.01, dt=1e-3)


def test_pathwise_validation(harmonic):
    with pytest.raises(StatsError):
        pathwise_derivative(harmonic, HARM_THETA, "k", ensemble_size=0,
                            horizon=0.01, dt=1e-3)
    with pytest.raises(StatsError):
        pathwise_derivative(harmonic, HARM_THETA, "k", ensemble_size=2,
                            horizon=0.0105, dt=1e-3)
    bare = ModelSpec(name="bare", dim=1, noise_dim=1, param_names=("a",),
                     box=ParameterBox([0.0], [1.0]),
                     drift=lambda s, p: -s, diffusion=lambda s, p: [[1.0]])
    with pytest.raises(UnsupportedCapabilityError):
        pathwise_derivative(bare, np.array([0.5]), "a", ensemble_size=2,
                            horizon=0.01, dt=1e-3)


def test_report_rejects_nonfinite():
    with pytest.raises(StatsError):
        SensitivityReport("apriori", ["a"], np.array([0.1]),
                          np.array([[np.nan]]), np.array([[1.0]]), 3)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def test_sensitivity_csv(tmp_path, harmonic):
    rep = pathwise_derivative(harmonic, HARM_THETA, "k", ensemble_size=4,
                              horizon=0.01, dt=1e-3, seed=1)
    path = tmp_path / "sens.csv"
    save_sensitivity_csv(rep, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "time,mean_k_comp0,mean_k_comp1,abs_k_comp0,abs_k_comp1"
    assert len(lines) == rep.times.size + 1
    row = [float(v) for v in lines[-1].split(",")]
    assert row[0] == pytest.approx(0.01)
    assert row[1] == rep.curves[0, -1]
