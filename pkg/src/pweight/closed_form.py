"""Closed-form optimal weights and simple comparator weighting schemes.

One-sided Gaussian (Spjotvoll) weights are ``w_i = Phi(mu_i/2 + c/mu_i) / q``
where ``c`` makes the weights sum to ``J``. Two-sided weights are

    w(mu; lam) = 2 Phi(-arccosh(lam exp(mu^2/2) / q) / |mu|) / q

with ``lam >= q exp(-min_i mu_i^2 / 2)`` chosen the same way. Both
multipliers are found by bisection on a strictly decreasing total-weight
function, evaluated once per distinct effect size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .exceptions import (
    BracketError,
    DomainError,
    EmptySelectionError,
    InfeasibleError,
    NoInteriorSolutionError,
)
from .numkit import bisect_decreasing

__all__ = [
    "EffectSizeVector",
    "WeightVector",
    "SpjotvollSolution",
    "TwoSidedSolution",
    "OneSidedCertificate",
    "TwoSidedCertificate",
    "spjotvoll_one_sided",
    "spjotvoll_two_sided",
    "two_sided_weight",
    "monotone_regime_one_sided",
    "monotone_regime_two_sided",
    "exponential_weights",
    "filter_weights",
]

SUM_RTOL = 1e-8
_BISECT_RTOL = 1e-10
_MAX_EXPANSIONS = 200


@dataclass(frozen=True)
class EffectSizeVector:
    """Standardized effect sizes in caller order.

    ``order`` is the stable permutation listing indices by increasing
    ``|mu|``.
    """

    mu: np.ndarray
    order: np.ndarray

    @classmethod
    def _build(cls, mu):
        mu = np.asarray(mu, dtype=float).ravel()
        if mu.size == 0:
            raise DomainError("effect size vector is empty")
        if not np.all(np.isfinite(mu)):
            raise DomainError("effect sizes must be finite")
        return cls(mu, np.argsort(np.abs(mu), kind="stable"))

    @classmethod
    def one_sided(cls, mu):
        out = cls._build(mu)
        if np.any(out.mu >= 0):
            bad = int(np.flatnonzero(out.mu >= 0)[0])
            raise DomainError(
                f"one-sided effect sizes must be < 0; mu[{bad}] = {out.mu[bad]}"
            )
        return out

    @classmethod
    def two_sided(cls, mu):
        out = cls._build(mu)
        if np.any(out.mu == 0):
            bad = int(np.flatnonzero(out.mu == 0)[0])
            raise DomainError(f"two-sided effect sizes must be nonzero; mu[{bad}] = 0")
        return out

    def __len__(self):
        return self.mu.size


def _as_effects(mu, sided):
    if isinstance(mu, EffectSizeVector):
        mu = mu.mu
    return EffectSizeVector.one_sided(mu) if sided == "one" else EffectSizeVector.two_sided(mu)


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative weights in caller order, summing to ``J``.

    ``q`` and ``sided`` are ``None`` for comparator schemes that carry no
    per-test level.
    """

    w: np.ndarray
    q: float | None = None
    sided: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    def __len__(self):
        return self.w.size

    def __array__(self, dtype=None, copy=None):
        return self.w if dtype is None else self.w.astype(dtype)

    @property
    def cap(self):
        if self.q is None:
            return math.inf
        return 1.0 / (2.0 * self.q) if self.sided == "two" else 1.0 / self.q

    def check(self, rtol=SUM_RTOL, atol=0.0):
        """Raise :class:`InfeasibleError` unless sum and box constraints hold."""
        n = self.w.size
        total = float(self.w.sum())
        if abs(total - n) > rtol * n:
            raise InfeasibleError(f"weights sum to {total!r}, expected {n}")
        if np.any(self.w < -atol) or np.any(self.w > self.cap + atol):
            raise InfeasibleError(f"weights leave the box [0, {self.cap:.6g}]")
        return self


@dataclass(frozen=True)
class SpjotvollSolution:
    weights: WeightVector
    c: float


@dataclass(frozen=True)
class TwoSidedSolution:
    weights: WeightVector
    lam: float
    m: float


class OneSidedCertificate(NamedTuple):
    monotone: bool
    g_at_max: float
    max_half_square: float


class TwoSidedCertificate(NamedTuple):
    monotone: bool
    a_star: float
    min_half_square: float
    max_half_square: float


def _check_q(q):
    if not 0.0 < q < 1.0:
        raise DomainError(f"per-test level q must lie in (0, 1), got {q}")


def spjotvoll_one_sided(mu, q):
    """Weights maximizing average one-sided power subject to ``sum(w) = J``.

    Parameters
    ----------
    mu : array-like or EffectSizeVector
        Strictly negative effect sizes.
    q : float
        Per-test level; the family-wise level is ``J q``.

    Returns
    -------
    SpjotvollSolution
    """
    eff = _as_effects(mu, "one")
    _check_q(q)
    n = len(eff)
    uniq, inverse, counts = np.unique(eff.mu, return_inverse=True, return_counts=True)
    target = n * q

    def total_level(c):
        return float(counts @ ndtr(uniq / 2.0 + c / uniq))

    big_m = float(np.max(uniq**2) / 2.0)
    lo, hi = 0.0, big_m + 50.0
    for _ in range(_MAX_EXPANSIONS):
        if total_level(lo) >= target:
            break
        lo -= 2.0 * (hi - lo)
    for _ in range(_MAX_EXPANSIONS):
        if total_level(hi) <= target:
            break
        hi *= 2.0
    g_lo, g_hi = total_level(lo), total_level(hi)
    if not g_lo >= target >= g_hi:
        raise InfeasibleError(
            f"cannot bracket the threshold constant: G({lo:.6g}) = {g_lo:.6g}, "
            f"G({hi:.6g}) = {g_hi:.6g}, J q = {target:.6g}"
        )
    c = bisect_decreasing(
        total_level, lo, hi, target, tol=_BISECT_RTOL * target, xtol=1e-16
    )
    w = _normalize(ndtr(uniq / 2.0 + c / uniq)[inverse] / q, uniq.size)
    return SpjotvollSolution(WeightVector(w, q, "one").check(), c)


def _normalize(w, n_unique):
    # the root is found to a relative 1e-10; rescaling removes the residual
    # and makes a single distinct effect size give exactly uniform weights
    n = w.size
    _check_sum(w, n)
    if n_unique == 1:
        return np.ones(n)
    return w * (n / w.sum())


def _check_sum(w, n):
    total = float(np.sum(w))
    if abs(total - n) > SUM_RTOL * n:
        raise InfeasibleError(
            f"root finding stalled: weights sum to {total!r}, expected {n}"
        )


def _arccosh_exp(s):
    """``arccosh(exp(s))`` for ``s >= 0`` without forming ``exp(s)``."""
    s = np.maximum(s, 0.0)
    return s + np.log1p(np.sqrt(-np.expm1(-2.0 * s)))


def two_sided_weight(mu, log_lam, q):
    """``w(mu; lam)`` of the two-sided closed form, with ``lam = exp(log_lam)``."""
    mu = np.asarray(mu, dtype=float)
    s = log_lam + 0.5 * mu * mu - math.log(q)
    if np.any(s < -1e-12):
        raise DomainError("multiplier below q exp(-mu^2/2) for some effect size")
    return 2.0 * ndtr(-_arccosh_exp(s) / np.abs(mu)) / q


def _two_sided_parts(eff, q):
    uniq, inverse, counts = np.unique(eff.mu, return_inverse=True, return_counts=True)
    half_sq = uniq**2 / 2.0
    m = float(half_sq.min())

    def total(log_lam):
        return float(counts @ two_sided_weight(uniq, log_lam, q))

    return uniq, inverse, total, m, float(half_sq.max())


def spjotvoll_two_sided(mu, q):
    """Weights maximizing average two-sided power subject to ``sum(w) = J``.

    Raises
    ------
    NoInteriorSolutionError
        If ``H(q exp(-m)) < J``: some weight would have to exceed its cap.
    """
    eff = _as_effects(mu, "two")
    _check_q(q)
    n = len(eff)
    uniq, inverse, total, m, _ = _two_sided_parts(eff, q)
    lo = math.log(q) - m
    h_lo = total(lo)
    if h_lo < n:
        raise NoInteriorSolutionError(h_lo, n)
    hi = lo + 1.0
    for _ in range(_MAX_EXPANSIONS):
        if total(hi) <= n:
            break
        hi = lo + 2.0 * (hi - lo)
    else:  # pragma: no cover - H tends to 0, so this needs absurd inputs
        raise InfeasibleError(f"cannot bracket the two-sided multiplier above {hi}")
    log_lam = bisect_decreasing(total, lo, hi, n, tol=_BISECT_RTOL * n, xtol=1e-16)
    w = _normalize(two_sided_weight(uniq, log_lam, q)[inverse], uniq.size)
    cap = 1.0 / (2.0 * q)
    if np.any(w > cap):
        raise NoInteriorSolutionError(h_lo, n, float(w.max()), cap)
    return TwoSidedSolution(WeightVector(w, q, "two").check(), math.exp(log_lam), m)


def monotone_regime_one_sided(mu, q):
    """Sufficient condition ``q <= G(M) / J`` for monotone one-sided weights.

    With ``M = max mu_i^2 / 2`` and ``G(c) = sum_i Phi(mu_i/2 + c/mu_i)``.
    When it holds, the Spjotvoll weights are nondecreasing in ``|mu|``.
    """
    eff = _as_effects(mu, "one")
    big_m = float(np.max(eff.mu**2) / 2.0)
    g = float(np.sum(ndtr(eff.mu / 2.0 + big_m / eff.mu)))
    return OneSidedCertificate(bool(q <= g / len(eff)), g, big_m)


def _regime_gap(a, m, big_m):
    return math.log(a) - m - (2.0 * a / math.sqrt(a * a - 1.0) - 1.0) * big_m


def monotone_regime_two_sided(mu, q):
    """Sufficient condition for monotone two-sided weights.

    Finds the unique ``a* > 1`` with
    ``log(a) - m = (2a / sqrt(a^2 - 1) - 1) M`` and checks
    ``H(q a* exp(-m)) >= J``.
    """
    eff = _as_effects(mu, "two")
    _check_q(q)
    _, _, total, m, big_m = _two_sided_parts(eff, q)

    def neg_gap(a):
        return -_regime_gap(a, m, big_m)

    lo = 1.0 + 1e-12
    hi = 2.0
    for _ in range(_MAX_EXPANSIONS):
        if neg_gap(hi) < 0:
            break
        hi *= 2.0
    if neg_gap(lo) < 0:
        raise BracketError("monotonicity condition has no root above 1")
    a_star = bisect_decreasing(neg_gap, lo, hi, 0.0, tol=1e-13, xtol=1e-16)
    ok = total(math.log(q) + math.log(a_star) - m) >= len(eff)
    return TwoSidedCertificate(bool(ok), a_star, m, big_m)


def exponential_weights(mu, beta):
    """Weights proportional to ``exp(beta |mu_i|)``, normalized to sum ``J``."""
    if beta < 0:
        raise DomainError(f"beta must be nonnegative, got {beta}")
    mu = np.asarray(mu.mu if isinstance(mu, EffectSizeVector) else mu, dtype=float)
    score = beta * np.abs(mu)
    e = np.exp(score - score.max())
    return WeightVector(mu.size * e / e.sum())


def filter_weights(prior_p, cutoff):
    """Equal weight ``J / K`` on the ``K`` tests with prior p-value <= cutoff."""
    if not 0.0 < cutoff < 1.0:
        raise DomainError(f"cutoff must lie in (0, 1), got {cutoff}")
    prior_p = np.asarray(prior_p, dtype=float).ravel()
    keep = prior_p <= cutoff
    k = int(keep.sum())
    if k == 0:
        raise EmptySelectionError(f"no prior p-value is <= {cutoff}")
    return WeightVector(np.where(keep, prior_p.size / k, 0.0))
