"""Independent reference computations shared by the test modules.

Nothing here calls the closed forms or the barrier solver: the grid
oracles maximize summed power by brute force over the simplex, and the
finite-difference helpers only evaluate objectives.
"""

import numpy as np

from pweight.roc import roc_value, two_sided_power


def _simplex_grid(power, mu, J, lo, hi, n):
    a = np.linspace(lo[0], hi[0], n)
    b = np.linspace(lo[1], hi[1], n)
    A, B = np.meshgrid(a, b, indexing="ij")
    return A, B, J - A - B, a[1] - a[0], b[1] - b[0]


def grid_maximize(power, mu, q, cap, coarse=601, fine=401):
    """Maximize ``sum_i power(w_i, mu_i, q)`` over ``sum w = J``, ``0 <= w <= cap``.

    ``J = 2`` uses a single line search on a fine grid; ``J = 3`` a coarse
    planar grid followed by one zoom around the best point, for a final
    resolution of about ``J / coarse / fine``.
    """
    mu = np.asarray(mu, dtype=float)
    J = mu.size
    top = min(J, cap)
    if J == 2:
        w1 = np.linspace(max(0.0, J - top), top, coarse * fine // 10)
        obj = power(w1, mu[0], q) + power(J - w1, mu[1], q)
        k = int(obj.argmax())
        return np.array([w1[k], J - w1[k]])
    if J != 3:
        raise ValueError("grid oracle handles J in {2, 3}")
    lo, hi = (0.0, 0.0), (top, top)
    for n in (coarse, fine):
        A, B, C, da, db = _simplex_grid(power, mu, J, lo, hi, n)
        ok = (C >= 0) & (C <= top)
        obj = np.full(A.shape, -np.inf)
        obj[ok] = power(A[ok], mu[0], q) + power(B[ok], mu[1], q) + power(C[ok], mu[2], q)
        i = np.unravel_index(obj.argmax(), obj.shape)
        best = (A[i], B[i])
        lo = (max(best[0] - da, 0.0), max(best[1] - db, 0.0))
        hi = (min(best[0] + da, top), min(best[1] + db, top))
    return np.array([best[0], best[1], J - best[0] - best[1]])


def one_sided_grid(mu, q):
    return grid_maximize(roc_value, mu, q, 1.0 / q)


def two_sided_grid(mu, q):
    # stay just inside the level cap, where the power is defined
    return grid_maximize(two_sided_power, mu, q, (1 - 1e-9) / (2 * q))


def fd_gradient(f, x, h):
    """Central differences of a scalar function."""
    eye = np.eye(x.size)
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in eye])


def fd_tridiagonal(f, x, h):
    """Second differences for the diagonal and first off-diagonal of a Hessian."""
    n = x.size
    eye = np.eye(n)
    f0 = f(x)
    diag = np.array([(f(x + h * e) - 2 * f0 + f(x - h * e)) / h**2 for e in eye])
    off = np.array([
        (f(x + h * (eye[i] + eye[i + 1])) - f(x + h * (eye[i] - eye[i + 1]))
         - f(x - h * (eye[i] - eye[i + 1])) + f(x - h * (eye[i] + eye[i + 1]))) / (4 * h * h)
        for i in range(n - 1)
    ])
    return diag, off
