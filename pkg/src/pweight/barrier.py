"""Log-barrier interior-point solver for bounded monotone one-sided weights.

Solves

    max  sum_i Phi(Phi^{-1}(q w_i) - mu_i)
    s.t. sum_i w_i = J,   l <= w_1 <= ... <= w_J <= min(u, 1/q)

for effect sizes sorted as ``0 > mu_1 >= ... >= mu_J``. Each centering
problem keeps the ``J + 1`` gaps ``w_1 - l, w_2 - w_1, ..., cap - w_J``
positive through a log barrier. Its Hessian is tridiagonal plus a positive
diagonal, so every Newton step costs two O(J) tridiagonal solves. Large
problems are solved on an evenly spaced, deduplicated subsample of the
effect sizes and linearly interpolated back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
import numpy as np
from scipy.special import ndtr, ndtri

from .closed_form import WeightVector
from .exceptions import (
    ConvergenceError,
    DomainError,
    InfeasibleError,
    LineSearchError,
    NumericalDegeneracyError,
    SolverError,
)
from .numkit import LOG_SQRT_2PI, ChainMatrix, solve_tridiagonal
from .roc import LOG_CLAMP, roc_value

__all__ = [
    "MonotoneProblem",
    "BarrierConfig",
    "NewtonState",
    "CenteringDerivatives",
    "MonotoneResult",
    "feasible_start",
    "centering_derivatives",
    "kkt_newton_step",
    "kkt_residual",
    "newton_decrement",
    "backtracking_search",
    "solve_centering",
    "solve_monotone",
    "subsample_solve",
    "monotone_weights",
    "power_of_weights",
]


@dataclass(frozen=True)
class MonotoneProblem:
    """Bounded monotone weight program.

    ``mu`` must be strictly negative and sorted so that ``|mu|`` increases;
    ``upper = inf`` means the natural cap ``1/q``.
    """

    mu: np.ndarray
    q: float
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        object.__setattr__(self, "mu", mu)
        if mu.size == 0:
            raise DomainError("effect size vector is empty")
        if not 0.0 < self.q < 1.0:
            raise DomainError(f"per-test level q must lie in (0, 1), got {self.q}")
        if not np.all(mu < 0):
            raise DomainError("monotone weights need strictly negative effect sizes")
        if np.any(np.diff(mu) > 0):
            raise DomainError("effect sizes must be sorted so that |mu| is nondecreasing")
        if not (0.0 <= self.lower < 1.0 < self.upper):
            raise InfeasibleError(
                f"bounds need 0 <= l < 1 < u, got l={self.lower}, u={self.upper}"
            )
        if self.upper != math.inf and self.upper > 1.0 / self.q * (1 + 1e-12):
            raise InfeasibleError(f"upper bound {self.upper} exceeds 1/q = {1.0 / self.q}")

    @property
    def size(self):
        return self.mu.size

    @property
    def cap(self):
        return min(self.upper, 1.0 / self.q)

    @classmethod
    def from_effects(cls, mu, q, lower=0.0, upper=math.inf):
        """Sort arbitrary-order effects; returns ``(problem, order)``.

        ``order[k]`` is the caller index of the ``k``-th sorted effect.
        """
        mu = np.asarray(mu, dtype=float).ravel()
        order = np.argsort(-mu, kind="stable")
        return cls(mu[order], q, lower, upper), order


@dataclass(frozen=True)
class BarrierConfig:
    """Interior-point parameters.

    ``kappa`` is the factor by which ``t`` grows between centering steps.
    ``eps`` bounds the final duality gap ``(J + 1) / t`` in units of the
    total power; ``None`` means ``eps_rel`` times the power of unweighted
    testing, ``sum f(1)``. Uniform weights are feasible, so that sum is a
    lower bound on the optimum and the default certifies a relative
    accuracy of ``eps_rel``. A fixed absolute target would be meaningless
    for weak effects (total power near ``J q``) and below the resolution
    of double precision for strong ones.

    A centering step ends once ``lambda^2 / 2 < newton_tol``. At large
    ``t`` the decrement can stall above that on rounding noise; the step
    is then also accepted if ``lambda^2 / 2 <= center_slack * (J + 1)``
    and the decrement has not halved over ``stall_window`` iterations (or
    the line search finds no step). The extra suboptimality is at most a
    ``center_slack`` fraction of the duality gap.
    """

    t0: float = 1.0
    kappa: float = 10.0
    eps: float | None = None
    eps_rel: float = 1e-10
    ls_alpha: float = 0.01
    ls_beta: float = 0.5
    newton_tol: float = 1e-9
    center_slack: float = 1e-3
    stall_window: int = 5
    max_newton: int = 200
    subsample_L: int = 10_000
    dedup_c0: float = 1e-6

    def __post_init__(self):
        if not self.t0 > 0:
            raise DomainError("t0 must be positive")
        if not self.kappa > 1:
            raise DomainError("kappa must exceed 1")
        if self.eps is not None and not self.eps > 0:
            raise DomainError("eps must be positive")
        if not 0 < self.ls_alpha < 0.5:
            raise DomainError("ls_alpha must lie in (0, 0.5)")
        if not 0 < self.ls_beta < 1:
            raise DomainError("ls_beta must lie in (0, 1)")
        if self.subsample_L < 2:
            raise DomainError("subsample_L must be at least 2")
        if not self.dedup_c0 > 0:
            raise DomainError("dedup_c0 must be positive")
        if not (self.newton_tol > 0 and self.center_slack >= 0):
            raise DomainError("newton_tol must be positive and center_slack nonnegative")
        if self.stall_window < 2 or self.max_newton < 1:
            raise DomainError("stall_window must be >= 2 and max_newton >= 1")

    def gap_target(self, prob):
        """Absolute duality-gap target for ``prob``."""
        if self.eps is not None:
            return self.eps
        return self.eps_rel * float(np.sum(roc_value(np.ones(prob.size), prob.mu, prob.q)))


@dataclass(frozen=True)
class CenteringDerivatives:
    objective: float
    grad: np.ndarray
    hess: ChainMatrix
    gaps: np.ndarray
    curvature: np.ndarray  # diagonal of D, the concavity of the power terms


@dataclass(frozen=True)
class NewtonState:
    """Snapshot of one Newton iteration, handed to solver callbacks."""

    t: float
    w: np.ndarray
    grad: np.ndarray
    hess_offdiag: np.ndarray
    hess_diag: np.ndarray
    delta_w: np.ndarray
    nu: float
    decrement: float
    step: float = math.nan


@dataclass
class MonotoneResult:
    weights: WeightVector
    outer_iterations: int = 0
    final_t: float = math.nan
    newton_steps: int = 0
    gap: float = 0.0
    subsampled: bool = False
    knots: int = 0
    extra: dict = field(default_factory=dict)


def feasible_start(n, lower, upper, q):
    """Strictly feasible, strictly increasing start ``e + delta v``.

    ``v`` is ``(1, ..., J)`` centered at its mean and ``delta`` is 90% of
    the largest spread that keeps ``w_1 > l`` and ``w_J < min(u, 1/q)``.
    """
    if n < 1:
        raise DomainError("need at least one hypothesis")
    cap = min(upper, 1.0 / q)
    if not (0.0 <= lower < 1.0 < cap):
        raise InfeasibleError(
            f"no strictly feasible point: need 0 <= l < 1 < min(u, 1/q), "
            f"got l={lower}, u={upper}, q={q}"
        )
    if n == 1:
        return np.ones(1)
    v = np.arange(1, n + 1, dtype=float) - (n + 1) / 2.0
    half = (n - 1) / 2.0
    delta = 0.9 * min((1.0 - lower) / half, (cap - 1.0) / half)
    return 1.0 + delta * v


def _gaps(w, prob):
    return np.diff(np.concatenate(([prob.lower], w, [prob.cap])))


def _power_terms(w, prob):
    """``log f'(w)`` and ``log |f''(w)|`` per coordinate, for ``t = 1``."""
    q, mu = prob.q, prob.mu
    z = ndtri(q * w)
    log_grad = math.log(q) + mu * z - 0.5 * mu * mu
    log_curv = log_grad + math.log(q) + np.log(-mu) + LOG_SQRT_2PI + 0.5 * z * z
    return np.minimum(log_grad, LOG_CLAMP), np.minimum(log_curv, LOG_CLAMP)


def _weights_from_gaps(d, prob):
    return prob.lower + np.cumsum(d[:-1])


def _derivatives(w, d, t, prob):
    if not np.all(d > 0):
        raise InfeasibleError(f"point is not strictly feasible (min gap {d.min():.3g})")
    log_grad, log_curv = _power_terms(w, prob)
    inv = 1.0 / d
    inv2 = inv * inv
    curvature = t * np.exp(log_curv)
    grad = -t * np.exp(log_grad) - inv[:-1] + inv[1:]
    hess = ChainMatrix(inv2, curvature)
    objective = -t * float(np.sum(roc_value(w, prob.mu, prob.q))) - float(np.sum(np.log(d)))
    return CenteringDerivatives(objective, grad, hess, d, curvature)


def centering_derivatives(w, t, prob):
    """Objective, gradient and Hessian of the centering problem at ``w``.

    The objective is ``-t sum f(w_i) - sum_{k=0}^{J} log(gap_k)``.

    Raises
    ------
    InfeasibleError
        If some gap is not strictly positive.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != prob.mu.shape:
        raise DomainError(f"w has shape {w.shape}, expected {prob.mu.shape}")
    return _derivatives(w, _gaps(w, prob), t, prob)


def kkt_newton_step(grad, hess):
    """Solve ``[[H, e], [e^T, 0]] [dw; nu] = [-grad; 0]`` by block elimination.

    ``hess`` is a :class:`~pweight.numkit.ChainMatrix` (factored without
    cancellation) or a general :class:`~pweight.numkit.TridiagonalMatrix`.

    Returns
    -------
    delta_w : ndarray
    nu : float
    """
    grad = np.asarray(grad, dtype=float)
    rhs = np.column_stack((np.ones_like(grad), grad))
    if isinstance(hess, ChainMatrix):
        sol = hess.solve(rhs)
    else:
        sol = solve_tridiagonal(hess, rhs)
    a, b = sol[:, 0], sol[:, 1]
    nu = -b.sum() / a.sum()
    delta_w = -(b + nu * a)
    return delta_w, float(nu)


def kkt_residual(grad, hess, delta_w, nu):
    """Normwise relative residual of the Newton KKT system."""
    grad = np.asarray(grad, dtype=float)
    top = hess.matvec(delta_w) + nu + grad
    bottom = float(np.sum(delta_w))
    h_norm = float(np.max(np.abs(hess.diag)) + 2 * np.max(np.abs(hess.sub), initial=0.0))
    scale = (
        h_norm * float(np.max(np.abs(delta_w)))
        + abs(nu)
        + float(np.max(np.abs(grad)))
    )
    res = max(float(np.max(np.abs(top))), abs(bottom))
    return res / scale if scale > 0 else res


def newton_decrement(delta_w, hess):
    """``sqrt(dw^T H dw)``; ``lambda^2 / 2`` estimates centering suboptimality."""
    return math.sqrt(max(hess.quadratic_form(delta_w), 0.0))


def _decrement(delta_w, deriv):
    # same quadratic form as newton_decrement, summed as nonnegative terms
    step_gaps = np.diff(np.concatenate(([0.0], delta_w, [0.0])))
    quad = float(np.sum((step_gaps / deriv.gaps) ** 2) + np.sum(deriv.curvature * delta_w**2))
    return math.sqrt(quad)


def _power_change(w, w_new, prob):
    """``sum f(w_new) - sum f(w)`` computed term by term without cancellation."""
    q, mu = prob.q, prob.mu
    a = ndtri(q * w) - mu
    b = ndtri(q * w_new) - mu
    upper = (a > 0) & (b > 0)
    diff = np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    return float(np.sum(diff))


def _objective_change(w, delta_w, s, t, prob, gaps):
    step_gaps = s * np.diff(np.concatenate(([0.0], delta_w, [0.0])))
    barrier = -float(np.sum(np.log1p(step_gaps / gaps)))
    return -t * _power_change(w, w + s * delta_w, prob) + barrier


def _directional_derivative(w, delta_w, s, t, prob, gaps, step_gaps):
    """Slope of the centering objective along ``delta_w`` at ``w + s delta_w``.

    Summed over gaps rather than via the gradient, whose entries cancel.
    """
    log_grad, _ = _power_terms(w + s * delta_w, prob)
    power = -t * float(np.sum(np.exp(log_grad) * delta_w))
    return power - float(np.sum(step_gaps / (gaps + s * step_gaps)))


def backtracking_search(w, delta_w, t, prob, ls_alpha=0.01, ls_beta=0.5, deriv=None,
                        slope=None):
    """Backtracking step size for a feasible descent direction.

    Shrinks ``s`` by ``ls_beta`` from 1 until ``w + s dw`` is strictly
    feasible and satisfies the Armijo condition
    ``g(w + s dw) <= g(w) + ls_alpha s slope``. At large ``t`` objective
    values lose the digits needed for that comparison, so the condition
    is also accepted when the slope at the trial point is at most
    ``ls_alpha * slope``; by convexity along the line that implies it.

    ``slope`` defaults to ``grad^T dw``; for a Newton step the exact value
    is ``-lambda^2``.

    Raises
    ------
    LineSearchError
        If no step above ``1e-16`` is acceptable.
    """
    w = np.asarray(w, dtype=float)
    delta_w = np.asarray(delta_w, dtype=float)
    if deriv is None:
        deriv = centering_derivatives(w, t, prob)
    if slope is None:
        slope = float(deriv.grad @ delta_w)
    if slope >= 0:
        raise LineSearchError(f"not a descent direction (slope {slope:.3g})")
    step_gaps = np.diff(np.concatenate(([0.0], delta_w, [0.0])))
    d = deriv.gaps
    s = 1.0
    while s > 1e-16:
        if np.all(d + s * step_gaps > 0):
            bound = ls_alpha * s * slope
            if _objective_change(w, delta_w, s, t, prob, d) <= bound:
                return s
            if _directional_derivative(w, delta_w, s, t, prob, d, step_gaps) <= ls_alpha * slope:
                return s
        s *= ls_beta
    raise LineSearchError("backtracking found no acceptable step; centering stalled")


def _center(d, t, prob, cfg, callback=None):
    # The iterate is carried as its J + 1 gaps. Near active bounds the gaps
    # are many orders of magnitude below the weights, and differencing
    # stored weights would leave them with only a few correct digits.
    floor = cfg.center_slack * (prob.size + 1)
    history = []
    for step in range(cfg.max_newton + 1):
        w = _weights_from_gaps(d, prob)
        deriv = _derivatives(w, d, t, prob)
        delta_w, nu = kkt_newton_step(deriv.grad, deriv.hess)
        lam = _decrement(delta_w, deriv)
        half = lam * lam / 2.0
        history.append(half)
        k = cfg.stall_window
        stalled = len(history) > k and history[-1] > 0.5 * history[-1 - k]
        done = half < cfg.newton_tol or (half <= floor and stalled)
        s = math.nan
        if not done:
            try:
                if step == cfg.max_newton:
                    raise ConvergenceError(
                        f"centering at t={t:.3g} did not converge in {cfg.max_newton} "
                        f"Newton steps (decrement {lam:.3g})",
                        decrement=lam,
                    )
                s = backtracking_search(
                    w, delta_w, t, prob, cfg.ls_alpha, cfg.ls_beta, deriv, slope=-lam * lam
                )
            except (ConvergenceError, LineSearchError):
                if half > floor:
                    raise
                done = True
        if callback is not None:
            callback(
                NewtonState(t, w, deriv.grad, deriv.hess.sub, deriv.hess.diag,
                            delta_w, nu, lam, s)
            )
        if done:
            return d, step
        d = d + s * np.diff(np.concatenate(([0.0], delta_w, [0.0])))
    raise AssertionError("unreachable")  # pragma: no cover


def solve_centering(w0, t, prob, cfg, callback=None):
    """Equality-constrained Newton method for one centering problem.

    Returns
    -------
    w : ndarray
        Approximate minimizer, strictly feasible and summing to ``J``.
    steps : int
        Number of Newton steps taken.
    """
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != prob.mu.shape:
        raise DomainError(f"w has shape {w0.shape}, expected {prob.mu.shape}")
    d, steps = _center(_gaps(w0, prob), t, prob, cfg, callback)
    return _weights_from_gaps(d, prob), steps


def _average_ties(w, mu):
    uniq, inverse = np.unique(mu, return_inverse=True)
    if uniq.size == mu.size:
        return w
    sums = np.bincount(inverse, weights=w)
    counts = np.bincount(inverse)
    return (sums / counts)[inverse]


def solve_monotone(prob, cfg=None, callback=None):
    """Barrier method for :class:`MonotoneProblem` of size at most ``cfg.subsample_L``.

    Returns
    -------
    MonotoneResult
        Weights in the (sorted) order of ``prob.mu`` plus diagnostics. The
        final duality gap ``(J + 1) / t`` is at most the configured target.

    Raises
    ------
    SolverError
        If a centering step fails; subsampling usually avoids this.
    """
    cfg = cfg or BarrierConfig()
    n = prob.size
    if n > cfg.subsample_L:
        raise DomainError(
            f"J = {n} exceeds subsample_L = {cfg.subsample_L}; use subsample_solve"
        )
    if n == 1:
        return MonotoneResult(WeightVector(np.ones(1), prob.q, "one"))
    target = cfg.gap_target(prob)
    d = _gaps(feasible_start(n, prob.lower, prob.upper, prob.q), prob)
    t = cfg.t0
    outer = newton = 0
    while True:
        try:
            d, steps = _center(d, t, prob, cfg, callback)
        except (ConvergenceError, LineSearchError, NumericalDegeneracyError) as exc:
            raise SolverError(
                f"barrier method failed at t={t:.3g} for J={n}: {exc}; "
                "try subsample_solve with a smaller subsample_L"
            ) from exc
        outer += 1
        newton += steps
        if (n + 1) / t <= target:
            break
        t *= cfg.kappa
    w = _weights_from_gaps(d, prob)
    w = _average_ties(w * (n / w.sum()), prob.mu)
    return MonotoneResult(
        WeightVector(w, prob.q, "one"),
        outer_iterations=outer,
        final_t=t,
        newton_steps=newton,
        gap=(n + 1) / t,
    )


def _subsample_indices(mu, n_keep, c0):
    n = mu.size
    idx = np.unique(np.linspace(0, n - 1, n_keep).round().astype(int))
    keep = [idx[0]]
    anchor = mu[idx[0]]
    for i in idx[1:]:
        if mu[i] < anchor - c0:
            keep.append(i)
            anchor = mu[i]
    return np.asarray(keep)


def subsample_solve(prob, cfg=None, callback=None):
    """Solve on at most ``cfg.subsample_L`` deduplicated effects, then interpolate.

    For ``J <= L`` this is :func:`solve_monotone`. Otherwise ``L`` evenly
    spaced effects are kept, near-ties closer than ``dedup_c0`` are
    dropped, the reduced problem is solved, and weights are interpolated
    linearly in ``mu`` (constant beyond the end knots), rescaled to sum to
    ``J`` and clipped to the bounds.
    """
    cfg = cfg or BarrierConfig()
    n = prob.size
    if n <= cfg.subsample_L:
        return solve_monotone(prob, cfg, callback)
    keep = _subsample_indices(prob.mu, cfg.subsample_L, cfg.dedup_c0)
    reduced = replace(prob, mu=prob.mu[keep])
    sub = solve_monotone(reduced, cfg, callback)
    knots_x = -reduced.mu
    w = np.interp(-prob.mu, knots_x, sub.weights.w)
    w *= n / w.sum()
    w = np.clip(w, prob.lower, prob.cap)
    w *= n / w.sum()
    w = _average_ties(w, prob.mu)
    return MonotoneResult(
        WeightVector(w, prob.q, "one"),
        outer_iterations=sub.outer_iterations,
        final_t=sub.final_t,
        newton_steps=sub.newton_steps,
        gap=sub.gap,
        subsampled=True,
        knots=keep.size,
    )


def monotone_weights(mu, q, lower=0.0, upper=math.inf, cfg=None):
    """Bounded monotone weights for effects given in any order.

    Routes through :func:`subsample_solve`; the returned weights follow
    the caller's order.
    """
    prob, order = MonotoneProblem.from_effects(mu, q, lower, upper)
    res = subsample_solve(prob, cfg)
    w = np.empty_like(res.weights.w)
    w[order] = res.weights.w
    res.weights = WeightVector(w, q, "one")
    return res


def power_of_weights(w, mu, q):
    """Expected number of one-sided discoveries ``sum_i f(w_i; mu_i, q)``."""
    w = np.asarray(w, dtype=float).ravel()
    mu = np.asarray(mu.mu if hasattr(mu, "mu") else mu, dtype=float).ravel()
    if w.shape != mu.shape:
        raise DomainError(f"{w.size} weights for {mu.size} effect sizes")
    return float(np.sum(roc_value(w, mu, q)))
