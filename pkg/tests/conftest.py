"""Shared oracles and factories for the test suite.

The brute-force helpers here are deliberately independent of the library's
evaluation path: plain box sums over the integer lattice, direct quadratic
scans, and quadrature.  Expected values in the tests are computed from
these oracles (or verified against them), never from the code under test.
"""

import numpy as np
import pytest

from rtbm.model import RtbmModel


def brute_force_theta(z, omega, half=25):
    """Box sum of exp(-1/2 n^T Omega n + n^T z) as (log magnitude, phase)."""
    omega = np.asarray(omega, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    g = omega.shape[0]
    grids = np.meshgrid(*[np.arange(-half, half + 1)] * g, indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=1).astype(float)
    expo = -0.5 * np.einsum("ij,jk,ik->i", pts, omega, pts) + pts @ z
    m = float(np.max(expo.real))
    total = np.sum(np.exp(expo - m))
    return m + np.log(abs(total)), float(np.angle(total))


def brute_force_theta_moments(z, omega, half=25):
    """(value, first-moment vector, second-moment matrix) ratios by box sum."""
    omega = np.asarray(omega, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    g = omega.shape[0]
    grids = np.meshgrid(*[np.arange(-half, half + 1)] * g, indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=1).astype(float)
    expo = -0.5 * np.einsum("ij,jk,ik->i", pts, omega, pts) + pts @ z
    w = np.exp(expo - np.max(expo.real))
    total = np.sum(w)
    first = pts.T @ w / total
    second = (pts.T * w) @ pts / total
    return total, first, second


def brute_force_ellipsoid(omega, center, radius):
    """All integer points with (n-c)^T Omega (n-c) <= R^2 by box scan."""
    omega = np.asarray(omega, dtype=float)
    center = np.asarray(center, dtype=float)
    g = omega.shape[0]
    lam_min = np.linalg.eigvalsh(omega)[0]
    half = int(np.ceil(radius / np.sqrt(lam_min))) + int(np.ceil(np.max(np.abs(center)))) + 1
    grids = np.meshgrid(*[np.arange(-half, half + 1)] * g, indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=1)
    diff = pts - center
    q = np.einsum("ij,jk,ik->i", diff, omega, diff)
    return pts[q <= radius * radius]


def random_pd_matrix(rng, n, ridge=1.0):
    g = rng.normal(size=(n, n))
    return g.T @ g + ridge * np.eye(n)


def random_valid_model(rng, nv=None, nh=None, w_scale=0.7, b_scale=0.5):
    """Random model that is valid by construction (Q built from a PD Schur)."""
    nv = nv or int(rng.integers(1, 4))
    nh = nh or int(rng.integers(1, 4))
    t = random_pd_matrix(rng, nv)
    s = random_pd_matrix(rng, nh, ridge=0.5)
    w = rng.normal(scale=w_scale, size=(nv, nh))
    q = s + w.T @ np.linalg.solve(t, w)
    return RtbmModel(
        t,
        0.5 * (q + q.T),
        w,
        rng.normal(scale=b_scale, size=nv),
        rng.normal(scale=b_scale, size=nh),
    )


@pytest.fixture
def test_model_1d():
    """The 1d reference model: T=1, Q=2, W=1, B=0 (Schur complement 1)."""
    return RtbmModel([[1.0]], [[2.0]], [[1.0]], [0.0], [0.0])
