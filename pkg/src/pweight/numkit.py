"""Normal distribution functions, bisection, and symmetric tridiagonal solves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack
from scipy.special import log_ndtr, ndtr, ndtri

from .exceptions import BracketError, DomainError, NumericalDegeneracyError

__all__ = [
    "std_normal_cdf",
    "std_normal_sf",
    "log_std_normal_cdf",
    "std_normal_quantile",
    "bisect_decreasing",
    "TridiagonalMatrix",
    "solve_tridiagonal",
    "ChainMatrix",
]

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def std_normal_cdf(x):
    """Standard normal CDF, accurate in relative terms deep in the lower tail.

    Accepts scalars or arrays; ``-inf`` maps to 0 and ``+inf`` to 1.
    """
    out = ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_sf(x):
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    out = ndtr(np.negative(x))
    return float(out) if np.ndim(out) == 0 else out


def log_std_normal_cdf(x):
    out = log_ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    Raises
    ------
    DomainError
        If any ``p`` lies outside (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"normal quantile needs 0 < p < 1, got {p!r}")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


def bisect_decreasing(f, lo, hi, target, tol, xtol=None, max_iter=200):
    """Solve ``f(x) = target`` for a continuous, strictly decreasing ``f``.

    The bracket is halved on a fixed schedule (no secant steps), so the
    result is a deterministic function of the inputs.

    Parameters
    ----------
    f : callable
        Scalar function, decreasing on ``[lo, hi]``.
    lo, hi : float
        Bracket with ``f(lo) >= target >= f(hi)``.
    target : float
    tol : float
        Stop once ``|f(x) - target| <= tol``.
    xtol : float, optional
        Stop once the bracket is narrower than ``xtol * max(1, |x|)``.
        Defaults to ``tol``.
    max_iter : int

    Returns
    -------
    float
    """
    if xtol is None:
        xtol = tol
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    f_lo, f_hi = f(lo), f(hi)
    if f_lo < target or f_hi > target:
        raise BracketError(
            f"bracket [{lo}, {hi}] does not straddle target {target}: "
            f"f(lo)={f_lo}, f(hi)={f_hi}"
        )
    if abs(f_lo - target) <= tol:
        return lo
    if abs(f_hi - target) <= tol:
        return hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):  # each pass halves the bracket
        x = 0.5 * (lo + hi)
        fx = f(x)
        if abs(fx - target) <= tol:
            return x
        if fx > target:
            lo = x
        else:
            hi = x
        mid = 0.5 * (lo + hi)
        # mid in (lo, hi) means the bracket is down to adjacent floats
        if hi - lo <= xtol * max(1.0, abs(mid)) or mid in (lo, hi):
            return mid
    return x


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Square tridiagonal matrix stored as three diagonals."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float)
        sub = np.asarray(self.sub, dtype=float)
        sup = np.asarray(self.sup, dtype=float)
        if diag.ndim != 1 or diag.size == 0:
            raise DomainError("diagonal must be a non-empty vector")
        if sub.shape != (diag.size - 1,) or sup.shape != (diag.size - 1,):
            raise DomainError(
                f"off-diagonals must have length {diag.size - 1}, "
                f"got {sub.shape} and {sup.shape}"
            )
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "sub", sub)
        object.__setattr__(self, "sup", sup)

    @classmethod
    def symmetric(cls, diag, offdiag):
        offdiag = np.asarray(offdiag, dtype=float)
        return cls(offdiag, diag, offdiag)

    @property
    def size(self):
        return self.diag.size

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[1:] += self.sub * x[:-1]
        y[:-1] += self.sup * x[1:]
        return y

    def quadratic_form(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x))

    def to_dense(self):
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)


def solve_tridiagonal(M, b):
    """Solve ``M x = b`` for symmetric positive definite tridiagonal ``M``.

    Uses an L D L^T factorization without pivoting (LAPACK ``?ptsv``),
    O(J) time and memory. ``b`` may hold several right-hand sides as
    columns; they share one factorization.

    Raises
    ------
    NumericalDegeneracyError
        If a pivot is not strictly positive, i.e. ``M`` is not numerically
        positive definite.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[:1] != (M.size,) or b.ndim > 2:
        raise DomainError(f"right-hand side must have {M.size} rows, got shape {b.shape}")
    if not np.array_equal(M.sub, M.sup):
        raise DomainError("solve_tridiagonal requires a symmetric matrix")
    if not (np.all(np.isfinite(M.diag)) and np.all(np.isfinite(M.sub))):
        raise NumericalDegeneracyError("tridiagonal matrix has non-finite entries")
    if M.size == 1:  # dptsv rejects an empty off-diagonal
        if not M.diag[0] > 0:
            raise NumericalDegeneracyError("non-positive pivot at row 0; matrix is not positive definite")
        return b / M.diag[0]
    _, _, x, info = lapack.dptsv(M.diag, M.sub, b)
    if info > 0:
        raise NumericalDegeneracyError(
            f"non-positive pivot at row {info - 1}; matrix is not positive definite"
        )
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise DomainError(f"illegal argument {-info} passed to dptsv")
    return x


def _mobius_scan(a, b, c, d):
    """Inclusive left products ``M_k @ ... @ M_0`` of positive 2x2 matrices.

    ``M_k = [[a_k, b_k], [c_k, d_k]]``. Each product is rescaled by the sum
    of its entries; only ratios matter to the caller. Log-depth doubling
    on the four entry arrays keeps the work in whole-array operations.
    """
    a, b, c, d = (np.array(x, dtype=float) for x in (a, b, c, d))
    k = 1
    while k < a.size:
        a1, b1, c1, d1 = a[k:], b[k:], c[k:], d[k:]
        a0, b0, c0, d0 = a[:-k], b[:-k], c[:-k], d[:-k]
        na = a1 * a0 + b1 * c0
        nb = a1 * b0 + b1 * d0
        nc = c1 * a0 + d1 * c0
        nd = c1 * b0 + d1 * d0
        scale = na + nb + nc + nd
        a[k:], b[k:], c[k:], d[k:] = na / scale, nb / scale, nc / scale, nd / scale
        k *= 2
    return a, b, c, d


@dataclass(frozen=True)
class ChainMatrix:
    """Weighted path Laplacian plus a nonnegative diagonal.

    ``x^T A x = sum_k coupling[k] (x_k - x_{k-1})^2 + sum_j extra[j] x_j^2``
    with ``x_{-1} = x_J = 0``, so ``coupling`` has ``J + 1`` entries and
    ``A`` is tridiagonal with off-diagonal ``-coupling[1:-1]``.

    The ``L D L^T`` pivots obey ``s_0 = extra_0 + coupling_0``,
    ``p_j = s_j + coupling_{j+1}`` and
    ``s_{j+1} = extra_{j+1} + coupling_{j+1} s_j / p_j``: sums of positive
    terms only. Eliminating directly on the assembled diagonal computes
    the same pivots as differences of nearly equal numbers whenever the
    couplings dwarf ``extra``, and can lose positive definiteness to
    rounding. The recurrence is a chain of Moebius maps with positive
    coefficients, evaluated here as a prefix product.
    """

    coupling: np.ndarray
    extra: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coupling, dtype=float)
        x = np.asarray(self.extra, dtype=float)
        if x.ndim != 1 or x.size == 0 or c.shape != (x.size + 1,):
            raise DomainError(
                f"need J >= 1 diagonal terms and J + 1 couplings, got {x.shape} and {c.shape}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(x))):
            raise NumericalDegeneracyError("chain matrix has non-finite entries")
        if np.any(c < 0) or np.any(x < 0):
            raise DomainError("couplings and diagonal terms must be nonnegative")
        object.__setattr__(self, "coupling", c)
        object.__setattr__(self, "extra", x)

    @property
    def size(self):
        return self.extra.size

    @property
    def diag(self):
        return self.extra + self.coupling[:-1] + self.coupling[1:]

    @property
    def sub(self):
        return -self.coupling[1:-1]

    sup = sub

    def to_tridiagonal(self):
        return TridiagonalMatrix.symmetric(self.diag, self.sub)

    def matvec(self, x):
        return self.to_tridiagonal().matvec(x)

    def quadratic_form(self, x):
        """Sum of the nonnegative terms of ``x^T A x``; no cancellation."""
        x = np.asarray(x, dtype=float)
        steps = np.diff(np.concatenate(([0.0], x, [0.0])))
        return float(np.sum(self.coupling * steps**2) + np.sum(self.extra * x**2))

    def to_dense(self):
        return self.to_tridiagonal().to_dense()

    def pivots(self):
        """Pivots ``p`` of ``A = L diag(p) L^T``, computed without cancellation."""
        c, x = self.coupling, self.extra
        n = x.size
        s = np.empty(n)
        s[0] = x[0] + c[0]
        if n > 1:
            cj, xj = c[1:n], x[1:]
            # s_j = (a s_0 + b) / (c s_0 + d) with [[a, b], [c, d]] the j-th product
            pa, pb, pc, pd = _mobius_scan(xj + cj, xj * cj, np.ones(n - 1), cj)
            s[1:] = (pa * s[0] + pb) / (pc * s[0] + pd)
        p = s + c[1:]
        if not np.all(p > 0) or not np.all(np.isfinite(p)):
            raise NumericalDegeneracyError("chain matrix is singular: a pivot vanished")
        return p

    def solve(self, b):
        """Solve ``A x = b``; ``b`` may hold several right-hand sides as columns."""
        b = np.asarray(b, dtype=float)
        if b.shape[:1] != (self.size,) or b.ndim > 2:
            raise DomainError(f"right-hand side must have {self.size} rows, got shape {b.shape}")
        p = self.pivots()
        if self.size == 1:
            return b / p[0]
        mult = -self.coupling[1:-1] / p[:-1]
        x, info = lapack.dpttrs(p, mult, b.reshape(self.size, -1))
        if info != 0:  # pragma: no cover - argument error inside LAPACK
            raise DomainError(f"illegal argument {-info} passed to dpttrs")
        return x.reshape(b.shape)
