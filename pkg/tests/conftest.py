import numpy as np
import pytest

import prefmpc as pm

ORACLE_Q = np.diag([40.0, 40.0, 40.0, 5.0, 5.0, 5.0])
ORACLE_R = np.diag([0.2, 0.2])


@pytest.fixture(scope="session")
def system():
    return pm.make_oscillating_masses()


@pytest.fixture(scope="session")
def small_pool(system):
    return pm.generate_pool(system, pm.GenConfig(n_t=12, horizon=10, seed=5))


@pytest.fixture(scope="session")
def quad_dataset(small_pool):
    def oracle(a, b):
        return pm.pref_quadratic(a, b, ORACLE_Q, ORACLE_R)

    return pm.build_pairs(small_pool, 60, oracle, np.random.default_rng(17))


def scalar_trajectory(xs, us):
    """1-state/1-input trajectory from explicit sequences."""
    X = np.asarray(xs, dtype=float).reshape(-1, 1)
    U = np.asarray(us, dtype=float).reshape(-1, 1)
    Y = X[:-1].copy()
    return pm.Trajectory(X=X, U=U, Y=Y)
