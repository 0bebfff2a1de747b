import numpy as np
import pytest

from gridwatch.varmodel import VarModel


def rotation_block(r, theta):
    c, s = np.cos(theta), np.sin(theta)
    return r * np.array([[c, -s], [s, c]])


@pytest.fixture
def spiral_model():
    """Stable VAR(1) whose noiseless trajectory spans all four dimensions for
    ~100 steps (distinct complex eigenvalue pairs), so an exact-recovery fit
    is identifiable."""
    A = np.zeros((4, 4))
    A[:2, :2] = rotation_block(0.98, 0.7)
    A[2:, 2:] = rotation_block(0.95, 1.3)
    A[0, 2] = 0.05
    A[3, 1] = -0.04
    c = np.array([0.3, -0.2, 0.1, 0.4])
    return VarModel(c=c, coefs=A[None], sigma=np.eye(4))


@pytest.fixture
def correlated_model():
    """Moderately persistent VAR(1) with solidly nonzero covariance entries,
    for the stationary-moment oracles (every element well away from zero)."""
    A = np.array(
        [
            [0.60, 0.15, 0.10, 0.05],
            [0.10, 0.55, 0.15, 0.05],
            [0.05, 0.20, 0.60, 0.05],
            [0.10, 0.05, 0.10, 0.65],
        ]
    )
    sigma = np.array(
        [
            [1.00, 0.45, 0.40, 0.35],
            [0.45, 1.00, 0.50, 0.30],
            [0.40, 0.50, 1.00, 0.40],
            [0.35, 0.30, 0.40, 1.00],
        ]
    )
    return VarModel(c=np.array([0.5, -0.3, 0.2, 0.1]), coefs=A[None], sigma=sigma)


def lyapunov_fixed_point(model, tol=1e-14, max_iter=200000):
    """Stationary covariance by iterating G <- A G A' + Sigma from zero.

    Independent oracle: pure fixed-point iteration, no linear solves.
    """
    A = model.coefs[0]
    G = np.zeros_like(A)
    for _ in range(max_iter):
        nxt = A @ G @ A.T + model.sigma
        if np.max(np.abs(nxt - G)) < tol:
            return nxt
        G = nxt
    raise RuntimeError("lyapunov iteration did not converge")


def random_spd(rng, dim=4, base=0.3):
    """Random symmetric positive-definite matrix with bounded conditioning."""
    M = rng.normal(size=(dim, dim))
    return M @ M.T + base * np.eye(dim)


def to_physical(model, scales=(2.0, 1.0, 0.003, 0.01), mean=(100.0, 50.0, 0.3, 60.0)):
    """Conjugate a unit-scale model into plausible channel units (keeps the
    sin channel well inside [-1, 1])."""
    S = np.diag(np.asarray(scales, dtype=float))
    S_inv = np.diag(1.0 / np.asarray(scales, dtype=float))
    mean = np.asarray(mean, dtype=float)
    A = S @ model.coefs[0] @ S_inv
    sigma = S @ model.sigma @ S
    c = S @ model.c + (np.eye(len(mean)) - A) @ mean
    return VarModel(c=c, coefs=A[None], sigma=sigma)
