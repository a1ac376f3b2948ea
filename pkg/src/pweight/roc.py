"""Power (ROC) curves of one- and two-sided tests and their derivatives.

For a one-sided Gaussian test of ``H: mu >= 0`` run at level ``q * w`` the
power is ``f(w) = Phi(Phi^{-1}(q w) - mu)``. Writing ``z = Phi^{-1}(q w)``,

    f'(w)  = q exp(mu z - mu^2 / 2)
    f''(w) = q^2 mu sqrt(2 pi) exp(z^2 / 2 + mu z - mu^2 / 2)

so ``f`` is strictly concave whenever ``mu < 0``. Exponents are summed in
log space and clamped before the single ``exp`` so that ``f''`` stays finite
as ``w -> 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import expit, log_expit, logit, ndtr, ndtri

from .exceptions import DomainError
from .numkit import LOG_SQRT_2PI

__all__ = [
    "GaussianAlternative",
    "roc_value",
    "roc_grad",
    "roc_hess",
    "two_sided_power",
    "two_sided_grad",
    "TWO_SIDED_MARGIN",
    "MLRFamily",
    "GaussianLocation",
    "LaplaceLocation",
    "LogisticLocation",
    "general_roc",
    "general_roc_grad",
    "general_roc_hess",
]

LOG_CLAMP = 700.0
# strong concavity of the two-sided power only holds on levels < 1 - eps
TWO_SIDED_MARGIN = 1e-9


def _scalar_or_array(out):
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GaussianAlternative:
    """Standardized effect size of one test, ``T ~ N(mu, 1)``."""

    mu: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"effect size must be finite, got {self.mu}")

    def require_one_sided(self):
        if not self.mu < 0:
            raise DomainError(f"one-sided alternatives need mu < 0, got {self.mu}")
        return self


def _check_level(q):
    if not 0.0 < q < 1.0:
        raise DomainError(f"per-test level q must lie in (0, 1), got {q}")


def _check_weights(w, cap, *, interior):
    w = np.asarray(w, dtype=float)
    if interior:
        if np.any(w <= 0.0) or np.any(w >= cap):
            raise DomainError(
                f"derivative is undefined at the boundary; need 0 < w < {cap:.6g}"
            )
    elif np.any(w < 0.0) or np.any(w > cap) or np.any(np.isnan(w)):
        raise DomainError(f"weights must lie in [0, {cap:.6g}]")
    return w


def roc_value(w, mu, q):
    """Power ``Phi(Phi^{-1}(q w) - mu)``, extended to ``f(0) = 0``, ``f(1/q) = 1``."""
    _check_level(q)
    w = _check_weights(w, 1.0 / q, interior=False)
    level = np.minimum(q * w, 1.0)
    with np.errstate(divide="ignore"):
        z = ndtri(level)
    out = ndtr(z - np.asarray(mu, dtype=float))
    out = np.where(level <= 0.0, 0.0, np.where(level >= 1.0, 1.0, out))
    return _scalar_or_array(out)


def roc_grad(w, mu, q):
    """First derivative ``q exp(mu z - mu^2/2)`` of :func:`roc_value` in ``w``."""
    _check_level(q)
    w = _check_weights(w, 1.0 / q, interior=True)
    mu = np.asarray(mu, dtype=float)
    z = ndtri(q * w)
    log_g = math.log(q) + mu * z - 0.5 * mu * mu
    return _scalar_or_array(np.exp(np.minimum(log_g, LOG_CLAMP)))


def roc_hess(w, mu, q):
    """Second derivative of :func:`roc_value` in ``w``; negative for ``mu < 0``."""
    _check_level(q)
    w = _check_weights(w, 1.0 / q, interior=True)
    mu = np.asarray(mu, dtype=float)
    z = ndtri(q * w)
    with np.errstate(divide="ignore"):
        log_h = (
            2.0 * math.log(q)
            + np.log(np.abs(mu))
            + LOG_SQRT_2PI
            + 0.5 * z * z
            + mu * z
            - 0.5 * mu * mu
        )
    out = np.sign(mu) * np.exp(np.minimum(log_h, LOG_CLAMP))
    return _scalar_or_array(out)


def _two_sided_cap(q):
    return (1.0 - TWO_SIDED_MARGIN) / (2.0 * q)


def two_sided_power(w, mu, q):
    """Power of the two-sided test of ``mu = 0`` at level ``q w``.

    ``Phi(z - mu) + Phi(z + mu)`` with ``z = Phi^{-1}(q w / 2)``; even in ``mu``.
    """
    _check_level(q)
    w = _check_weights(w, 1.0 / (2.0 * q), interior=False)
    if np.any(w > _two_sided_cap(q)):
        raise DomainError(
            f"two-sided weights must stay below (1 - {TWO_SIDED_MARGIN})/(2q)"
        )
    mu = np.asarray(mu, dtype=float)
    half = q * w / 2.0
    with np.errstate(divide="ignore"):
        z = ndtri(half)
    out = ndtr(z - mu) + ndtr(z + mu)
    out = np.where(half <= 0.0, 0.0, out)
    return _scalar_or_array(out)


def two_sided_grad(w, mu, q):
    """Derivative ``q exp(-mu^2/2) cosh(mu z)`` of :func:`two_sided_power`."""
    _check_level(q)
    w = _check_weights(w, 1.0 / (2.0 * q), interior=True)
    mu = np.asarray(mu, dtype=float)
    z = ndtri(q * w / 2.0)
    a = np.abs(mu * z)
    # log cosh(a) = a + log1p(exp(-2a)) - log 2
    log_g = math.log(q) - 0.5 * mu * mu + a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)
    return _scalar_or_array(np.exp(np.minimum(log_g, LOG_CLAMP)))


@runtime_checkable
class MLRFamily(Protocol):
    """Continuous one-parameter family with monotone likelihood ratio.

    ``cdf(theta, .)`` must be continuous and strictly increasing on a common
    open support. ``score`` is the derivative of the log density in ``x``;
    together with ``pdf`` it gives the ROC derivatives by the chain rule.
    """

    name: str

    def cdf(self, theta, x): ...

    def quantile(self, theta, p): ...

    def pdf(self, theta, x): ...

    def score(self, theta, x): ...


@dataclass(frozen=True)
class GaussianLocation:
    """``N(theta, scale^2)`` with known scale."""

    scale: float = 1.0
    name: str = field(default="gaussian-location", init=False)

    def cdf(self, theta, x):
        return ndtr((np.asarray(x) - theta) / self.scale)

    def quantile(self, theta, p):
        return theta + self.scale * ndtri(p)

    def pdf(self, theta, x):
        u = (np.asarray(x) - theta) / self.scale
        return np.exp(-0.5 * u * u - LOG_SQRT_2PI) / self.scale

    def score(self, theta, x):
        return -(np.asarray(x) - theta) / self.scale**2


@dataclass(frozen=True)
class LaplaceLocation:
    """Double exponential density ``exp(-|x - theta| / b) / (2 b)``."""

    scale: float = 1.0
    name: str = field(default="laplace-location", init=False)

    def cdf(self, theta, x):
        u = (np.asarray(x, dtype=float) - theta) / self.scale
        return np.where(u < 0, 0.5 * np.exp(np.minimum(u, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(u, 0.0)))

    def quantile(self, theta, p):
        p = np.asarray(p, dtype=float)
        lower = np.log(2.0 * np.minimum(p, 0.5))
        upper = -np.log(2.0 * (1.0 - np.maximum(p, 0.5)))
        return theta + self.scale * np.where(p < 0.5, lower, upper)

    def pdf(self, theta, x):
        return np.exp(-np.abs(np.asarray(x) - theta) / self.scale) / (2.0 * self.scale)

    def score(self, theta, x):
        return -np.sign(np.asarray(x) - theta) / self.scale


@dataclass(frozen=True)
class LogisticLocation:
    """Logistic density ``e^u / (1 + e^u)^2 / s`` with ``u = (x - theta) / s``."""

    scale: float = 1.0
    name: str = field(default="logistic-location", init=False)

    def cdf(self, theta, x):
        return expit((np.asarray(x) - theta) / self.scale)

    def quantile(self, theta, p):
        return theta + self.scale * logit(p)

    def pdf(self, theta, x):
        u = (np.asarray(x) - theta) / self.scale
        return np.exp(log_expit(u) + log_expit(-u)) / self.scale

    def score(self, theta, x):
        u = (np.asarray(x) - theta) / self.scale
        return (1.0 - 2.0 * expit(u)) / self.scale


def _check_open_unit(x):
    x = np.asarray(x, dtype=float)
    if not np.all((x > 0.0) & (x < 1.0)):
        raise DomainError("ROC argument must lie in (0, 1)")
    return x


def general_roc(family, theta1, theta0, x):
    """ROC ``F_{theta1}(F_{theta0}^{-1}(x))`` of the test rejecting small values."""
    x = _check_open_unit(x)
    return _scalar_or_array(family.cdf(theta1, family.quantile(theta0, x)))


def general_roc_grad(family, theta1, theta0, x):
    """``G'(x) = f_{theta1}(y) / f_{theta0}(y)`` at ``y = F_{theta0}^{-1}(x)``."""
    x = _check_open_unit(x)
    y = family.quantile(theta0, x)
    return _scalar_or_array(family.pdf(theta1, y) / family.pdf(theta0, y))


def general_roc_hess(family, theta1, theta0, x):
    """``G''(x) = G'(x) (score_{theta1}(y) - score_{theta0}(y)) / f_{theta0}(y)``."""
    x = _check_open_unit(x)
    y = family.quantile(theta0, x)
    f0 = family.pdf(theta0, y)
    ratio = family.pdf(theta1, y) / f0
    out = ratio * (family.score(theta1, y) - family.score(theta0, y)) / f0
    return _scalar_or_array(out)
