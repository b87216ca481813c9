import numpy as np
import pytest

from pathdensity.kernels import KernelSpec, PointCloud


class QuadraticPeakField:
    """g(x) = -||x||^2 / 2: unique maximum at the origin, flow x(t) = x0 e^-t."""

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = -0.5 * (x**2).sum(axis=1)
        return v

    def gradient(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return -x.copy()

    def hessian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.broadcast_to(-np.eye(2), (len(x), 2, 2)).copy()


def fd_gradient(value_fn, x, step):
    """Central finite differences of a scalar field."""
    x = np.asarray(x, dtype=float)
    out = np.empty(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        out[k] = (value_fn(x + e) - value_fn(x - e)) / (2 * step)
    return out


def fd_hessian(gradient_fn, x, step):
    """Central finite differences of a gradient field; symmetrized."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        cols.append((np.asarray(gradient_fn(x + e)) - np.asarray(gradient_fn(x - e)))
                    / (2 * step))
    H = np.column_stack(cols)
    return 0.5 * (H + H.T)


@pytest.fixture(scope="session")
def gaussian_kernel():
    return KernelSpec()


@pytest.fixture(scope="session")
def small_cloud():
    rng = np.random.default_rng(1234)
    return PointCloud(rng.standard_normal((60, 2)))
