"""Seeded simulation experiments producing long-format result tables.

Effect sizes are drawn as ``mu_i = -|Z_i|`` with ``Z_i`` iid standard
normal from a Philox counter-based generator. Independent trials use
child seeds spawned from the run seed, so each trial's stream depends
only on the seed and the trial index, never on scheduling. Independent
configurations may run on worker threads; ``PWEIGHT_THREADS`` caps their
number.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .barrier import (
    BarrierConfig,
    MonotoneProblem,
    monotone_weights,
    power_of_weights,
    solve_monotone,
    subsample_solve,
)
from .closed_form import monotone_regime_one_sided, spjotvoll_one_sided
from .exceptions import DomainError

__all__ = [
    "GENERATOR",
    "ExperimentResult",
    "make_generator",
    "trial_generators",
    "draw_effects",
    "thread_count",
    "weight_shapes",
    "power_loss",
    "subsample_accuracy",
    "spjot_vs_monotone",
    "timing",
    "EXPERIMENTS",
    "run_experiment",
]

GENERATOR = "numpy.random.Philox"
POWER_LOSS_LOWER = (1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 0.9)
POWER_LOSS_UPPER = (2.0, 10.0, math.inf)


@dataclass
class ExperimentResult:
    """A results table plus a few headline numbers for the console."""

    header: tuple
    rows: list
    summary: dict


def make_generator(seed):
    return np.random.Generator(np.random.Philox(seed))


def trial_generators(seed, n):
    """``n`` independent generators; the ``k``-th depends only on ``seed`` and ``k``."""
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def draw_effects(rng, n):
    return -np.abs(rng.standard_normal(n))


def thread_count():
    """Worker threads: ``PWEIGHT_THREADS`` if set, else the number of cores."""
    raw = os.environ.get("PWEIGHT_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"PWEIGHT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError(f"PWEIGHT_THREADS must be a positive integer, got {raw!r}")
    return n


def _map(fn, items, threads):
    # results come back in input order whatever the completion order
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def weight_shapes(seed, n=1000, q=1e-7, threads=1, cfg=None):
    """Monotone weights under lower, upper and two-sided bounds.

    Panels: ``lower`` (l in 0, 0.25, 0.5, 0.75; u = inf), ``upper``
    (u in 1.25, 1.5, 1.75, 2; l = 0) and ``both`` (l in 0.25, 0.5 with
    u in 1.5, 1.75). One row per panel, bound pair and hypothesis, in
    order of increasing ``|mu|``.
    """
    mu = np.sort(draw_effects(make_generator(seed), n))[::-1]
    configs = (
        [("lower", l, math.inf) for l in (0.0, 0.25, 0.5, 0.75)]
        + [("upper", 0.0, u) for u in (1.25, 1.5, 1.75, 2.0)]
        + [("both", l, u) for l in (0.25, 0.5) for u in (1.5, 1.75)]
    )

    def solve(c):
        return monotone_weights(mu, q, c[1], c[2], cfg).weights.w

    rows = []
    for (panel, l, u), w in zip(configs, _map(solve, configs, threads)):
        rows.extend((panel, l, u, i, mu[i], w[i]) for i in range(n))
    return ExperimentResult(("panel", "lower", "upper", "index", "mu", "weight"), rows,
                            {"configurations": len(configs), "J": n, "q": q})


def power_loss(seed, n=10_000, q=None, lowers=POWER_LOSS_LOWER, uppers=POWER_LOSS_UPPER,
               threads=1, cfg=None):
    """Power of bounded monotone weights against the unweighted and optimal references."""
    q = 0.05 / n if q is None else q
    mu = draw_effects(make_generator(seed), n)
    unweighted = power_of_weights(np.ones(n), mu, q)
    optimal = power_of_weights(spjotvoll_one_sided(mu, q).weights.w, mu, q)
    grid = [(l, u) for u in uppers for l in lowers]

    def solve(c):
        return power_of_weights(monotone_weights(mu, q, c[0], c[1], cfg).weights.w, mu, q)

    rows = [
        (l, u, p, unweighted, optimal, p / optimal)
        for (l, u), p in zip(grid, _map(solve, grid, threads))
    ]
    return ExperimentResult(
        ("lower", "upper", "power", "unweighted_power", "spjotvoll_power", "ratio"), rows,
        {"J": n, "q": q, "unweighted_power": unweighted, "spjotvoll_power": optimal},
    )


def subsample_accuracy(seed, n=20_000, q=5e-3, subsample_L=10_000, cfg=None):
    """Full barrier solve against the subsampled solve on the same effects."""
    mu = draw_effects(make_generator(seed), n)
    prob, order = MonotoneProblem.from_effects(mu, q)
    base = cfg or BarrierConfig()
    full_cfg = replace(base, subsample_L=max(n, base.subsample_L))
    sub_cfg = replace(base, subsample_L=subsample_L)
    w_full = solve_monotone(prob, full_cfg).weights.w
    res = subsample_solve(prob, sub_cfg)
    w_sub = res.weights.w
    abs_err = np.abs(w_full - w_sub)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel_err = np.where(w_full > 0, abs_err / np.abs(w_full), math.inf)
    rows = [(i, prob.mu[i], w_full[i], w_sub[i], abs_err[i], rel_err[i]) for i in range(n)]
    return ExperimentResult(
        ("index", "mu", "w_full", "w_subsample", "abs_error", "rel_error"), rows,
        {"J": n, "q": q, "L": subsample_L, "knots": res.knots,
         "max_abs_error": float(abs_err.max())},
    )


def spjot_vs_monotone(seed, n=1000, q=1e-7, cfg=None):
    """Closed-form optimal weights next to monotone weights with l = 0, u = inf."""
    mu = draw_effects(make_generator(seed), n)
    cert = monotone_regime_one_sided(mu, q)
    w_s = spjotvoll_one_sided(mu, q).weights.w
    w_m = monotone_weights(mu, q, 0.0, math.inf, cfg).weights.w
    order = np.argsort(-mu, kind="stable")
    rows = [(k, mu[i], w_s[i], w_m[i], abs(w_s[i] - w_m[i])) for k, i in enumerate(order)]
    return ExperimentResult(
        ("index", "mu", "w_spjotvoll", "w_monotone", "abs_diff"), rows,
        {"J": n, "q": q, "monotone_regime": cert.monotone,
         "max_abs_diff": float(np.max(np.abs(w_s - w_m)))},
    )


def timing_trial(rng, n, cfg=None):
    """One timed solve with ``q = U/10``, ``l = V/10``, ``u = inf``."""
    mu = draw_effects(rng, n)
    u, v = rng.random(2)
    start = time.perf_counter()
    monotone_weights(mu, u / 10.0, v / 10.0, math.inf, cfg)
    return time.perf_counter() - start


def timing(seed, sizes=(100, 1000, 10_000, 100_000), trials=50, cfg=None):
    """Wall-clock time of the monotone solve over a range of ``J``.

    Trials run one after another: concurrent solves would contend for
    cores and distort the clock.
    """
    rows = []
    for j, n in enumerate(sizes):
        secs = np.array([timing_trial(rng, n, cfg)
                         for rng in trial_generators([seed, j], trials)])
        se = secs.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0
        rows.append((n, trials, secs.mean(), 2.0 * se, float(np.median(secs)), secs.max()))
    return ExperimentResult(
        ("J", "trials", "mean_seconds", "two_se", "median_seconds", "max_seconds"), rows,
        {"largest_J_median_seconds": rows[-1][4] if rows else math.nan},
    )


EXPERIMENTS = {
    "weight-shapes": weight_shapes,
    "power-loss": power_loss,
    "subsample-accuracy": subsample_accuracy,
    "spjot-vs-monotone": spjot_vs_monotone,
    "timing": timing,
}


def run_experiment(name, seed, threads=None, **kwargs):
    """Dispatch by experiment name; thread-aware experiments get ``threads``."""
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise DomainError(
            f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}"
        ) from None
    if name in ("weight-shapes", "power-loss"):
        kwargs["threads"] = thread_count() if threads is None else threads
    return fn(seed, **kwargs)
