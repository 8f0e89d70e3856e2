"""Trajectory generation: determinism, statistical accuracy, persistence."""

import numpy as np
import pytest

from respfit.errors import ConfigError, SimulationError
from respfit.sde import (
    IntegratorConfig,
    load_trajectory,
    save_trajectory,
    simulate,
    simulate_pair_common_noise,
)
from respfit.stats import batch_mean_stderr

from conftest import ou_velocity_autocorrelation

HARM_THETA = np.array([2.0, 1.0, 4.0, 0.0])   # gamma, kBT, k, x0
LM_THETA = np.array([0.5, 1.0, 0.2, 10.0, 0.0])
TW_THETA = np.array([0.5, 1.0, 1.5, 0.25])


def _harmonic_run(n=2_000_000, dt=2e-3, lag=0.02, seed=0,
                  scheme="langevin_splitting"):
    # lag >> dt so consecutive samples decorrelate within a batch and the
    # batch-means standard error is trustworthy (tau_v ~ 1 time unit here).
    from respfit.models import harmonic_test_model
    cfg = IntegratorConfig(scheme, dt, lag, n, burn_in=20.0, seed=seed)
    return simulate(harmonic_test_model(), HARM_THETA, cfg)


def test_determinism_bitwise(harmonic, triplewell):
    cfg = IntegratorConfig("langevin_splitting", 2e-3, 2e-3, 5_000,
                           burn_in=1.0, seed=7)
    t1 = simulate(harmonic, HARM_THETA, cfg)
    t2 = simulate(harmonic, HARM_THETA, cfg)
    assert np.array_equal(t1.states, t2.states)
    cfg_tw = IntegratorConfig("weak_trapezoidal", 1e-3, 1e-3, 5_000,
                              burn_in=1.0, seed=7)
    t3 = simulate(triplewell, TW_THETA, cfg_tw)
    t4 = simulate(triplewell, TW_THETA, cfg_tw)
    assert np.array_equal(t3.states, t4.states)


@pytest.fixture(scope="module")
def harmonic_traj():
    return _harmonic_run(n=4_000_000)


def test_harmonic_equipartition(harmonic_traj):
    v = harmonic_traj.states[:, 1]
    var = (v - v.mean()) ** 2
    se = batch_mean_stderr(var)
    assert abs(var.mean() - HARM_THETA[1]) < 3 * se


def test_harmonic_ou_autocovariance(harmonic_traj):
    v = harmonic_traj.states[:, 1]
    for lag_t in (0.04, 0.1, 0.2):
        L = int(round(lag_t / harmonic_traj.lag))
        est = float(np.mean(v[L:] * v[:-L]))
        exact = ou_velocity_autocorrelation(*HARM_THETA[:3], lag_t)
        assert est == pytest.approx(exact, rel=0.02)


def test_halving_dt_consistency():
    v1 = _harmonic_run(n=500_000, dt=2e-3, seed=3).states[:, 1]
    v2 = _harmonic_run(n=500_000, dt=1e-3, seed=4).states[:, 1]
    s1 = (v1 - v1.mean()) ** 2
    s2 = (v2 - v2.mean()) ** 2
    se = np.hypot(batch_mean_stderr(s1), batch_mean_stderr(s2))
    assert abs(s1.mean() - s2.mean()) < 3 * se


def test_stationarity_halves(langevin):
    cfg = IntegratorConfig("langevin_splitting", 2e-3, 0.1, 50_000,
                           burn_in=20.0, seed=5)
    x = simulate(langevin, LM_THETA, cfg).states[:, 0]
    h = x.size // 2
    a, b = x[:h], x[h:]
    se = np.hypot(batch_mean_stderr(a), batch_mean_stderr(b))
    assert abs(a.mean() - b.mean()) < 4 * se


def test_blowup_reports_step(langevin):
    cfg = IntegratorConfig("euler_maruyama", 0.5, 0.5, 1_000, burn_in=0.0,
                           seed=0, initial_state=np.array([-2.0, 0.0]))
    with pytest.raises(SimulationError) as exc:
        simulate(langevin, LM_THETA, cfg)
    assert exc.value.step is not None and exc.value.step >= 1


def test_triplewell_three_wells(triplewell):
    cfg = IntegratorConfig("weak_trapezoidal", 1e-3, 1e-3, 200_000,
                           burn_in=20.0, seed=2)
    x = simulate(triplewell, TW_THETA, cfg).states
    a = TW_THETA[1]
    centers = np.array([[0.0, 0.0], [2 * a, 0.0], [a, a * np.sqrt(3.0)]])
    for c in centers:
        frac = np.mean(np.linalg.norm(x - c, axis=1) < 0.7 * a)
        assert frac > 0.01


# ---------------------------------------------------------------------------
# Common-noise pairs
# ---------------------------------------------------------------------------

def test_pair_x0_velocity_invariance(langevin):
    th1 = LM_THETA.copy()
    th2 = LM_THETA.copy()
    th2[4] = 0.5
    cfg = IntegratorConfig("langevin_splitting", 2e-3, 2e-3, 10_000,
                           burn_in=0.0, seed=9)
    t1, t2 = simulate_pair_common_noise(
        langevin, (th1, th2), cfg,
        (np.array([th1[4], 0.3]), np.array([th2[4], 0.3])))
    dv = np.max(np.abs(t1.states[:, 1] - t2.states[:, 1]))
    assert dv <= 1e-10


def test_pair_identical_inputs(langevin):
    cfg = IntegratorConfig("langevin_splitting", 2e-3, 2e-3, 2_000,
                           burn_in=0.0, seed=1)
    t1, t2 = simulate_pair_common_noise(
        langevin, LM_THETA, cfg,
        (np.array([0.0, 0.0]), np.array([0.0, 0.0])))
    assert np.array_equal(t1.states, t2.states)


def test_pair_eps_divergence(langevin):
    th2 = LM_THETA.copy()
    th2[2] = 0.3
    cfg = IntegratorConfig("langevin_splitting", 2e-3, 2e-3, 2_000,
                           burn_in=0.0, seed=1)
    t1, t2 = simulate_pair_common_noise(
        langevin, (LM_THETA, th2), cfg,
        (np.array([0.0, 0.0]), np.array([0.0, 0.0])))
    assert np.max(np.abs(t1.states[:, 1] - t2.states[:, 1])) > 0


# ---------------------------------------------------------------------------
# Persistence, config validation
# ---------------------------------------------------------------------------

def test_trajectory_roundtrip(tmp_path, harmonic):
    cfg = IntegratorConfig("langevin_splitting", 2e-3, 2e-3, 3_000,
                           burn_in=1.0, seed=4)
    traj = simulate(harmonic, HARM_THETA, cfg)
    path = tmp_path / "run.traj"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    assert np.array_equal(back.states, traj.states)
    assert back.lag == traj.lag and back.seed == traj.seed
    assert back.model_name == traj.model_name
    assert np.array_equal(back.theta, traj.theta)
    assert back.scheme == traj.scheme and back.dt == traj.dt


def test_load_rejects_corrupt(tmp_path):
    p = tmp_path / "bad.traj"
    p.write_bytes(b"not a trajectory file at all.......")
    with pytest.raises(ConfigError):
        load_trajectory(p)


def test_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig("leapfrog", 1e-3, 1e-3, 100)
    with pytest.raises(ConfigError):
        IntegratorConfig("euler_maruyama", 1e-3, 2.5e-3, 100)
    with pytest.raises(ConfigError):
        IntegratorConfig("euler_maruyama", -1e-3, 1e-3, 100)
    with pytest.raises(ConfigError):
        IntegratorConfig("euler_maruyama", 1e-3, 1e-3, 0)


def test_scheme_model_compatibility(triplewell, harmonic):
    cfg = IntegratorConfig("langevin_splitting", 1e-3, 1e-3, 100, burn_in=0.0)
    with pytest.raises(ConfigError):
        simulate(triplewell, TW_THETA, cfg)
    cfg2 = IntegratorConfig("weak_trapezoidal", 1e-3, 1e-3, 100, burn_in=0.0)
    with pytest.raises(ConfigError):
        simulate(harmonic, HARM_THETA, cfg2)
