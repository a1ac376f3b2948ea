"""Weighted Bonferroni testing and the prior-to-current study pipeline.

A prior study supplies two-sided p-values ``P_0i``. Their z-scores are
taken with the sign that makes them negative, ``T_0i = Phi^{-1}(P_0i / 2)``,
and transported to the current sample size by
``mu_i = sqrt(N_i / N_0i) T_0i``. Weights computed from ``mu`` are then
applied to one-sided current p-values: hypothesis ``i`` is rejected when
``P_i <= q w_i``, which controls the family-wise error rate at ``J q``
whenever the weights sum to ``J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .exceptions import DomainError, EmptyJoinError

__all__ = [
    "SummaryStatRecord",
    "PairedStudy",
    "RejectionReport",
    "z_from_two_sided_p",
    "rescale_effects",
    "one_sided_current_p",
    "weighted_bonferroni",
    "score_method",
    "join_studies",
    "count_loci",
    "global_null_fwer",
]


@dataclass(frozen=True)
class SummaryStatRecord:
    """One hypothesis of a summary-statistics table.

    ``sign`` is the direction of the estimated effect (+1 or -1) when the
    table reports it, else ``None``.
    """

    id: str
    p_two_sided: float
    n: float
    sign: int | None = None

    def __post_init__(self):
        if not self.id:
            raise DomainError("record id must be a non-empty string")
        if not 0.0 < self.p_two_sided <= 1.0:
            raise DomainError(f"{self.id}: p-value must lie in (0, 1], got {self.p_two_sided}")
        if not (self.n > 0 and math.isfinite(self.n)):
            raise DomainError(f"{self.id}: sample size must be positive, got {self.n}")
        if self.sign not in (None, 1, -1):
            raise DomainError(f"{self.id}: sign must be +1 or -1, got {self.sign}")


@dataclass(frozen=True)
class PairedStudy:
    """Hypotheses present in both studies, in prior-study order.

    Attributes
    ----------
    ids : list of str
    prior_p : ndarray
        Two-sided prior p-values.
    prior_z : ndarray
        Negative prior z-scores.
    mu_hat : ndarray
        Effects rescaled to the current sample size.
    current_p : ndarray
        One-sided current p-values in the direction of the prior effect.
    dropped : int
        Shared hypotheses discarded because their prior p-value was 1.
    """

    ids: list
    prior_p: np.ndarray
    prior_z: np.ndarray
    mu_hat: np.ndarray
    current_p: np.ndarray
    dropped: int = 0

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class RejectionReport:
    rejected: np.ndarray
    weighted_p: np.ndarray
    q: float
    alpha: float
    hits: int


def z_from_two_sided_p(p0):
    """Prior z-score ``Phi^{-1}(p0 / 2)``, nonpositive by construction.

    ``p0 = 1`` maps to exactly 0.
    """
    arr = np.asarray(p0, dtype=float)
    if not np.all((arr > 0.0) & (arr <= 1.0)):
        raise DomainError("two-sided p-values must lie in (0, 1]")
    out = ndtri(arr / 2.0)
    return float(out) if out.ndim == 0 else out


def rescale_effects(t0, n, n0):
    """``sqrt(n / n0) * t0`` elementwise."""
    t0, n, n0 = (np.asarray(a, dtype=float) for a in (t0, n, n0))
    if np.any(~(n > 0)) or np.any(~(n0 > 0)):
        raise DomainError("sample sizes must be positive")
    return np.sqrt(n / n0) * t0


def one_sided_current_p(p_current, current_sign=None, prior_sign=None):
    """One-sided p-value of the replicated-sign test.

    ``p / 2`` when the current effect points the same way as the prior
    effect, ``1 - p / 2`` otherwise. Missing signs count as agreement.
    """
    p = np.asarray(p_current, dtype=float)
    if not np.all((p > 0.0) & (p <= 1.0)):
        raise DomainError("two-sided p-values must lie in (0, 1]")
    if current_sign is None or prior_sign is None:
        return p / 2.0
    agree = np.asarray(current_sign) * np.asarray(prior_sign) > 0
    return np.where(agree, p / 2.0, 1.0 - p / 2.0)


def weighted_bonferroni(p, w, q):
    """Reject hypothesis ``i`` when ``P_i <= q w_i``.

    Parameters
    ----------
    p : array-like
        One-sided p-values.
    w : array-like or WeightVector
        Nonnegative weights, normally summing to ``J``.
    q : float
        Per-test level; the family-wise level is ``J q``.

    Returns
    -------
    RejectionReport
        ``weighted_p`` holds ``P_i / w_i``, with ``+inf`` where ``w_i = 0``
        and ``P_i > 0``.
    """
    p = np.asarray(p, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if p.shape != w.shape:
        raise DomainError(f"{p.size} p-values for {w.size} weights")
    if not 0.0 < q < 1.0:
        raise DomainError(f"per-test level q must lie in (0, 1), got {q}")
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise DomainError("p-values must lie in [0, 1]")
    if np.any(~(w >= 0.0)):
        raise DomainError("weights must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        weighted = np.where(w > 0, p / w, np.where(p > 0, math.inf, 0.0))
    rejected = p <= q * w
    return RejectionReport(rejected, weighted, q, p.size * q, int(rejected.sum()))


def score_method(hits_method, hits_unweighted):
    """+1, 0 or -1 as the method finds more, as many or fewer hits."""
    if hits_method < 0 or hits_unweighted < 0:
        raise DomainError("hit counts must be nonnegative")
    return int(hits_method > hits_unweighted) - int(hits_method < hits_unweighted)


def _index_by_id(records, label):
    index = {}
    for k, rec in enumerate(records):
        if rec.id in index:
            raise DomainError(f"duplicate id {rec.id!r} in {label} study")
        index[rec.id] = k
    return index


def join_studies(prior, current):
    """Inner join of two summary-statistics tables on ``id``.

    Hypotheses whose prior p-value is 1 have a zero prior z-score and
    cannot be weighted one-sidedly; they are dropped and counted.

    Raises
    ------
    DomainError
        If an id repeats within a study.
    EmptyJoinError
        If no usable hypothesis is shared.
    """
    _index_by_id(prior, "prior")
    cur = _index_by_id(current, "current")
    pairs = [(a, current[cur[a.id]]) for a in prior if a.id in cur]
    if not pairs:
        raise EmptyJoinError("the two studies share no ids")
    usable = [(a, b) for a, b in pairs if a.p_two_sided < 1.0]
    dropped = len(pairs) - len(usable)
    if not usable:
        raise EmptyJoinError(f"all {dropped} shared ids have prior p-value 1")
    prior_p = np.array([a.p_two_sided for a, _ in usable])
    prior_z = z_from_two_sided_p(prior_p)
    prior_z = np.atleast_1d(prior_z)
    mu = rescale_effects(prior_z, [b.n for _, b in usable], [a.n for a, _ in usable])
    p_cur = np.array([b.p_two_sided for _, b in usable])
    signs_known = all(a.sign is not None and b.sign is not None for a, b in usable)
    if signs_known:
        current_p = one_sided_current_p(
            p_cur, [b.sign for _, b in usable], [a.sign for a, _ in usable]
        )
    else:
        current_p = one_sided_current_p(p_cur)
    return PairedStudy(
        [a.id for a, _ in usable], prior_p, prior_z, mu, current_p, dropped
    )


def count_loci(ids, rejected, groups=None):
    """Number of distinct loci among rejected hypotheses.

    ``groups`` maps an id to its locus label; ids it does not list form
    their own locus. Without ``groups`` this is the number of hits.
    """
    rejected = np.asarray(rejected, dtype=bool)
    if len(ids) != rejected.size:
        raise DomainError(f"{len(ids)} ids for {rejected.size} rejection flags")
    if groups is None:
        return int(rejected.sum())
    return len({groups.get(i, ("id", i)) for i, r in zip(ids, rejected) if r})


def global_null_fwer(w, q, n_rep, rng, chunk=256):
    """Monte Carlo family-wise error rate with all nulls true.

    Draws independent uniform p-values ``n_rep`` times and records whether
    weighted Bonferroni rejects anything.

    Returns
    -------
    fwer : float
    se : float
        Binomial standard error of ``fwer``.
    """
    w = np.asarray(w, dtype=float).ravel()
    thresholds = q * w
    any_reject = 0
    done = 0
    while done < n_rep:
        k = min(chunk, n_rep - done)
        u = rng.random((k, w.size))
        any_reject += int(np.count_nonzero((u <= thresholds).any(axis=1)))
        done += k
    fwer = any_reject / n_rep
    return fwer, math.sqrt(max(fwer * (1.0 - fwer), 0.0) / n_rep)
