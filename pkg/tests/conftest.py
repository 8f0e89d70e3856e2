"""Shared fixtures and analytic oracles for the test suite."""

import numpy as np
import pytest
from scipy.linalg import expm

from respfit.models import (
    ParameterBox,
    get_model,
    harmonic_test_model,
    langevin_morse_model,
    triple_well_model,
)
from respfit.surrogate import CollocationDesign, MultiIndexSet, fit


@pytest.fixture(scope="session")
def langevin():
    return langevin_morse_model()


@pytest.fixture(scope="session")
def triplewell():
    return triple_well_model()


@pytest.fixture(scope="session")
def harmonic():
    return harmonic_test_model()


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck (harmonic Langevin) matrix-exponential oracle
# ---------------------------------------------------------------------------

def ou_lag_covariance(gamma, kBT, k, t):
    """Stationary covariance E[z(t) z(0)^T] for z=(x-x0, v), closed form.

    The stationary covariance is C0 = diag(kBT/k, kBT) and the lag
    covariance is exp(A t) C0 with A the drift matrix [[0,1],[-k,-gamma]].
    """
    A = np.array([[0.0, 1.0], [-k, -gamma]])
    C0 = np.diag([kBT / k, kBT])
    return expm(A * t) @ C0


def ou_velocity_autocorrelation(gamma, kBT, k, t):
    return float(ou_lag_covariance(gamma, kBT, k, t)[1, 1])


# ---------------------------------------------------------------------------
# Surrogate construction from a known function (1-D and 2-D helpers)
# ---------------------------------------------------------------------------

def surrogate_from_function(fns, box: ParameterBox, max_order: int,
                            chebyshev_order: int):
    """Fit a surrogate to callables of the physical parameters.

    ``fns`` is a list of functions of theta (physical coordinates); the
    residual matrix at the collocation nodes is assembled exactly.
    """
    design = CollocationDesign(MultiIndexSet(box.dim, max_order),
                               chebyshev_order)
    nodes_phys = np.array([box.from_cube(u) for u in design.nodes])
    values = np.column_stack([
        np.array([float(f(theta)) for theta in nodes_phys]) for f in fns
    ])
    return fit(values, design, box), design
