import numpy as np
import pytest

from ddpm_lab import build_schedule, gaussian_mixture, point_masses


@pytest.fixture(scope="session")
def sched64():
    return build_schedule(64, 2.0, 4.0)


@pytest.fixture(scope="session")
def sched512():
    return build_schedule(512, 2.0, 4.0)


@pytest.fixture(scope="session")
def two_atoms_1d():
    return point_masses([(0.5, [1.0]), (0.5, [-1.0])])


@pytest.fixture(scope="session")
def gmm_1d():
    return gaussian_mixture([(0.3, [-1.0], 0.5), (0.7, [1.5], 2.0)])


@pytest.fixture(scope="session")
def gmm_2d():
    return gaussian_mixture([
        (0.4, [0.0, 0.0], [[1.0, 0.3], [0.3, 0.8]]),
        (0.6, [2.0, -1.0], [[0.5, -0.1], [-0.1, 0.9]]),
    ])


def fd_gradient(f, x, h):
    """Central-difference gradient of a scalar function (test-side oracle)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_jacobian(f, x, h):
    """Central-difference Jacobian of a vector function (test-side oracle)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.column_stack(cols)
