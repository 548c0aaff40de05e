"""Lattice machinery backing the theta summation kernel.

A lattice is represented by a real (g, g) basis matrix whose *rows* are the
basis vectors; for a quadratic form Omega = L L^T the relevant lattice is
generated by the rows of the Cholesky factor L.  The module provides

  * LLL basis reduction (delta = 0.75 by default),
  * a shortest-vector length estimate from the reduced basis, and
  * exhaustive enumeration of integer points inside an ellipsoid
    (n - c)^T Omega (n - c) <= R^2 by recursive one-dimensional sections.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBasis, PointBudgetExceeded
from .numerics import as_sym, cholesky

#: Default Lovász parameter for LLL reduction.
LLL_DELTA = 0.75

#: Default cap on enumerated points; exceeding it raises instead of truncating,
#: because silent truncation would invalidate the certified theta tail bound.
POINT_BUDGET = 10**7


def _gram_schmidt(basis):
    """Gram-Schmidt data (orthogonal vectors and mu coefficients) of rows."""
    g = basis.shape[0]
    ortho = np.zeros_like(basis)
    mu = np.zeros((g, g))
    for i in range(g):
        ortho[i] = basis[i]
        for j in range(i):
            denom = ortho[j] @ ortho[j]
            if denom <= 0.0:
                raise DegenerateBasis("Gram determinant underflow in Gram-Schmidt")
            mu[i, j] = (basis[i] @ ortho[j]) / denom
            ortho[i] = ortho[i] - mu[i, j] * ortho[j]
    return ortho, mu


def lll_reduce(basis, delta=LLL_DELTA):
    """LLL-reduce a lattice basis given as rows of a (g, g) matrix.

    The output spans the same lattice, is size-reduced (|mu_ij| <= 1/2) and
    satisfies the Lovász condition with the given delta in (0.25, 1).
    """
    if not 0.25 < delta < 1.0:
        raise ValueError(f"delta must lie in (0.25, 1), got {delta}")
    b = np.array(basis, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DegenerateBasis(f"basis must be square, got shape {b.shape}")
    g = b.shape[0]
    scale = float(np.max(np.abs(b)))
    if not np.isfinite(scale) or scale == 0.0:
        raise DegenerateBasis("zero or non-finite basis")
    if abs(np.linalg.det(b)) < 1e-12 * scale**g:
        raise DegenerateBasis("basis vectors are linearly dependent")

    ortho, mu = _gram_schmidt(b)
    k = 1
    while k < g:
        # Size-reduce b_k against all predecessors, updating mu as we go;
        # the Gram-Schmidt vectors are invariant under these subtractions.
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q != 0:
                b[k] -= q * b[j]
                mu[k, :j] -= q * mu[j, :j]
                mu[k, j] -= q
        lhs = ortho[k] @ ortho[k]
        rhs = (delta - mu[k, k - 1] ** 2) * (ortho[k - 1] @ ortho[k - 1])
        if lhs >= rhs:
            k += 1
        else:
            b[[k, k - 1]] = b[[k - 1, k]]
            ortho, mu = _gram_schmidt(b)
            k = max(k - 1, 1)
    return b


def shortest_vector_estimate(basis, delta=LLL_DELTA):
    """Length of the shortest vector in an LLL-reduced basis.

    This upper-bounds the true lattice minimum and is within the standard
    LLL approximation factor of it, which is sufficient to drive the theta
    tail bound at the dimensions used here.
    """
    reduced = lll_reduce(basis, delta)
    return float(np.min(np.linalg.norm(reduced, axis=1)))


@dataclass(frozen=True)
class EllipsoidPointSet:
    """All integer points n with (n - center)^T form (n - center) <= radius^2.

    ``points`` is an (N, g) integer array; the listed points are exactly the
    solution set (exhaustive, distinct).  Callers must not rely on ordering.
    """

    center: np.ndarray
    radius: float
    form: np.ndarray
    points: np.ndarray = field(repr=False)

    def __len__(self):
        return self.points.shape[0]


def enumerate_ellipsoid(form, center, radius, budget=POINT_BUDGET):
    """Enumerate integer lattice points inside a positive definite ellipsoid.

    The form is Cholesky-factored and the last coordinate is fixed over its
    admissible integer interval, recursing on the remaining section one
    dimension lower; the innermost level emits a contiguous integer range.

    Raises PointBudgetExceeded when the count passes ``budget``.
    """
    omega = as_sym(form, "form")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    g = omega.shape[0]
    if center.shape != (g,):
        raise ValueError(f"center must have shape ({g},), got {center.shape}")
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    upper = cholesky(omega, "form").T  # (n-c)^T Omega (n-c) = ||U (n-c)||^2

    points = []
    count = [0]
    prefix = np.zeros(g, dtype=np.int64)

    def recurse(i, budget_sq, shift):
        # shift[j] = sum_{l > i} U[j, l] (n_l - c_l) for j <= i
        u_ii = upper[i, i]
        half = np.sqrt(budget_sq) if budget_sq > 0.0 else 0.0
        lo = int(np.ceil(center[i] + (-half - shift[i]) / u_ii))
        hi = int(np.floor(center[i] + (half - shift[i]) / u_ii))
        if hi < lo:
            return
        if i == 0:
            block = np.arange(lo, hi + 1, dtype=np.int64)
            count[0] += block.size
            if count[0] > budget:
                raise PointBudgetExceeded(
                    f"ellipsoid enumeration passed {budget} points"
                )
            rows = np.empty((block.size, g), dtype=np.int64)
            rows[:, 0] = block
            rows[:, 1:] = prefix[1:]
            points.append(rows)
            return
        for n_i in range(lo, hi + 1):
            prefix[i] = n_i
            step = u_ii * (n_i - center[i]) + shift[i]
            rest = budget_sq - step * step
            if rest < 0.0:
                continue
            recurse(i - 1, rest, shift + upper[:, i] * (n_i - center[i]))

    # Recurse with a hair of slack, then filter on the exact quadratic
    # predicate, so boundary membership is decided by one code path only.
    r_sq = radius * radius
    recurse(g - 1, r_sq * (1.0 + 1e-12) + 1e-300, np.zeros(g))
    if points:
        pts = np.concatenate(points, axis=0)
        diff = pts - center
        q = np.einsum("ij,jk,ik->i", diff, omega, diff)
        pts = pts[q <= r_sq]
    else:
        pts = np.empty((0, g), dtype=np.int64)
    return EllipsoidPointSet(center=center, radius=float(radius), form=omega, points=pts)
