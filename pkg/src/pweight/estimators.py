"""scikit-learn style estimators around the weighting schemes.

A weighter is fitted on one value per hypothesis (effect sizes, or prior
p-values for :class:`FilterWeighter`) and stores ``weights_``. Its
``transform`` turns p-values of the same hypotheses into weighted
p-values ``P_i / w_i``. :class:`WeightedBonferroni` wraps a weighter and
predicts rejections.

Examples
--------
>>> import numpy as np
>>> from pweight.estimators import SpjotvollWeighter, WeightedBonferroni
>>> wb = WeightedBonferroni(SpjotvollWeighter(), q=0.05 / 3).fit([-1.0, -2.0, -3.0])
>>> wb.predict([0.2, 0.01, 0.001]).tolist()
[False, True, True]
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .barrier import BarrierConfig, monotone_weights
from .closed_form import (
    exponential_weights,
    filter_weights,
    spjotvoll_one_sided,
    spjotvoll_two_sided,
)
from .exceptions import DomainError
from .testing import weighted_bonferroni

__all__ = [
    "UniformWeighter",
    "SpjotvollWeighter",
    "MonotoneWeighter",
    "ExponentialWeighter",
    "FilterWeighter",
    "WeightedBonferroni",
]


def _as_vector(x, name):
    """Validate a per-hypothesis vector; a single column is also accepted."""
    arr = check_array(x, ensure_2d=False, dtype=float, input_name=name)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise DomainError(f"{name} must be a vector or a single column, got shape {arr.shape}")
        arr = arr[:, 0]
    return arr


class _Weighter(TransformerMixin, BaseEstimator):
    """Shared ``transform`` for weighting schemes."""

    def _set_weights(self, w):
        self.weights_ = np.asarray(w, dtype=float)
        self.n_hypotheses_ = self.weights_.size
        return self

    def transform(self, X):
        """Weighted p-values ``P_i / w_i`` (``+inf`` where a weight is 0)."""
        check_is_fitted(self, "weights_")
        p = _as_vector(X, "p")
        if p.size != self.n_hypotheses_:
            raise DomainError(
                f"fitted on {self.n_hypotheses_} hypotheses, got {p.size} p-values"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.weights_ > 0, p / self.weights_,
                            np.where(p > 0, math.inf, 0.0))


class UniformWeighter(_Weighter):
    """All weights 1: plain Bonferroni."""

    def fit(self, X, y=None):
        return self._set_weights(np.ones(_as_vector(X, "mu").size))


class SpjotvollWeighter(_Weighter):
    """Closed-form optimal weights for Gaussian alternatives.

    Parameters
    ----------
    q : float or None
        Per-test level. ``None`` lets :class:`WeightedBonferroni` supply it.
    sided : {"one", "two"}
    """

    def __init__(self, q=None, sided="one"):
        self.q = q
        self.sided = sided

    def fit(self, X, y=None):
        mu = _as_vector(X, "mu")
        if self.q is None:
            raise DomainError("SpjotvollWeighter needs q")
        if self.sided == "one":
            sol = spjotvoll_one_sided(mu, self.q)
            self.c_ = sol.c
        elif self.sided == "two":
            sol = spjotvoll_two_sided(mu, self.q)
            self.lambda_ = sol.lam
        else:
            raise DomainError(f"sided must be 'one' or 'two', got {self.sided!r}")
        return self._set_weights(sol.weights.w)


class MonotoneWeighter(_Weighter):
    """Bounded weights, nondecreasing in ``|mu|``, from the barrier solver.

    Parameters
    ----------
    q : float or None
    lower, upper : float
        Weight bounds, ``0 <= lower < 1 < upper``; ``upper=inf`` means ``1/q``.
    config : BarrierConfig or None
    """

    def __init__(self, q=None, lower=0.0, upper=math.inf, config=None):
        self.q = q
        self.lower = lower
        self.upper = upper
        self.config = config

    def fit(self, X, y=None):
        mu = _as_vector(X, "mu")
        if self.q is None:
            raise DomainError("MonotoneWeighter needs q")
        res = monotone_weights(mu, self.q, self.lower, self.upper,
                               self.config or BarrierConfig())
        self.result_ = res
        return self._set_weights(res.weights.w)


class ExponentialWeighter(_Weighter):
    """Weights proportional to ``exp(beta |mu_i|)``."""

    def __init__(self, beta=1.0):
        self.beta = beta

    def fit(self, X, y=None):
        return self._set_weights(exponential_weights(_as_vector(X, "mu"), self.beta).w)


class FilterWeighter(_Weighter):
    """Equal weights on hypotheses whose prior p-value is at most ``cutoff``.

    Fitted on prior p-values rather than effect sizes.
    """

    def __init__(self, cutoff=1e-4):
        self.cutoff = cutoff

    def fit(self, X, y=None):
        return self._set_weights(filter_weights(_as_vector(X, "prior_p"), self.cutoff).w)


class WeightedBonferroni(BaseEstimator):
    """Weighted Bonferroni test with a pluggable weighting scheme.

    Parameters
    ----------
    weighter : estimator
        Any weighter of this module; it is cloned on ``fit``. If it has a
        ``q`` parameter left at ``None``, ``q`` is passed down.
    q : float
        Per-test level; the family-wise level is ``J q``.
    """

    def __init__(self, weighter=None, q=0.05):
        self.weighter = weighter
        self.q = q

    def fit(self, X, y=None):
        est = clone(self.weighter) if self.weighter is not None else UniformWeighter()
        params = est.get_params()
        if "q" in params and params["q"] is None:
            est.set_params(q=self.q)
        self.weighter_ = est.fit(X)
        self.weights_ = est.weights_
        return self

    def report(self, X):
        """Full :class:`~pweight.testing.RejectionReport` for p-values ``X``."""
        check_is_fitted(self, "weights_")
        p = _as_vector(X, "p")
        if p.size != self.weights_.size:
            raise DomainError(f"fitted on {self.weights_.size} hypotheses, got {p.size} p-values")
        return weighted_bonferroni(p, self.weights_, self.q)

    def predict(self, X):
        """Boolean rejection decisions."""
        return self.report(X).rejected

    def decision_function(self, X):
        """Weighted p-values; a hypothesis is rejected when this is ``<= q``."""
        return self.report(X).weighted_p
