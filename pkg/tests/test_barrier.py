import math
from dataclasses import replace

import numpy as np
import pytest

from pweight.barrier import (
    BarrierConfig,
    MonotoneProblem,
    backtracking_search,
    centering_derivatives,
    feasible_start,
    kkt_newton_step,
    kkt_residual,
    monotone_weights,
    newton_decrement,
    power_of_weights,
    solve_centering,
    solve_monotone,
    subsample_solve,
)
from pweight.closed_form import spjotvoll_one_sided
from pweight.exceptions import DomainError, InfeasibleError, LineSearchError, SolverError
from pweight.numkit import TridiagonalMatrix
from pweight.roc import roc_grad, roc_value

# Maximizer of f(w1; -1) + f(2 - w1; -3) at q = 0.05 over w1 in [0.5, 1]
# (monotone and bounded by 0.5 <= w1 <= w2 <= 1.5), 10^6-point grid.
GRID_MONOTONE_J2 = (1.0, 1.0)


def random_problem(rng, n, q=None, lower=0.0, upper=math.inf):
    mu = np.sort(-np.abs(rng.standard_normal(n)) - 0.05)[::-1]
    return MonotoneProblem(mu, q if q is not None else 0.05 / n, lower, upper)


def random_feasible(rng, prob):
    gaps = rng.uniform(0.2, 1.0, prob.size + 1)
    cap = prob.cap if math.isfinite(prob.cap) else 1.0 / prob.q
    # scale positions so that they sum to J while staying inside (l, cap)
    for _ in range(100):
        w = prob.lower + np.cumsum(gaps[:-1])
        w = 1.0 + (w - w.mean()) * rng.uniform(0.1, 0.9) * min(
            (1 - prob.lower) / max(w.mean() - w.min(), 1e-12),
            (cap - 1) / max(w.max() - w.mean(), 1e-12))
        if np.all(np.diff(np.concatenate(([prob.lower], w, [cap]))) > 0):
            return w
    raise AssertionError("could not sample a feasible point")


def dense_kkt(hess, grad):
    n = grad.size
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = hess.to_dense()
    K[:n, n] = K[n, :n] = 1.0
    sol = np.linalg.solve(K, np.concatenate((-grad, [0.0])))
    return sol[:n], sol[n]


class TestProblem:
    def test_validation(self):
        with pytest.raises(DomainError):
            MonotoneProblem(np.array([-1.0, 0.0]), 0.05)
        with pytest.raises(DomainError):
            MonotoneProblem(np.array([-2.0, -1.0]), 0.05)  # |mu| decreasing
        with pytest.raises(InfeasibleError):
            MonotoneProblem(np.array([-1.0, -2.0]), 0.05, lower=1.0)
        with pytest.raises(InfeasibleError):
            MonotoneProblem(np.array([-1.0, -2.0]), 0.05, upper=30.0)

    def test_cap(self):
        assert MonotoneProblem(np.array([-1.0]), 0.05).cap == pytest.approx(20.0)
        assert MonotoneProblem(np.array([-1.0]), 0.05, upper=2.0).cap == 2.0

    def test_from_effects(self):
        prob, order = MonotoneProblem.from_effects([-2.0, -0.5, -1.0], 0.05)
        np.testing.assert_array_equal(prob.mu, [-0.5, -1.0, -2.0])
        np.testing.assert_array_equal(order, [1, 2, 0])

    def test_config_validation(self):
        for bad in ({"t0": 0}, {"kappa": 1.0}, {"ls_alpha": 0.5}, {"ls_beta": 1.0},
                    {"subsample_L": 1}, {"dedup_c0": 0.0}, {"eps": -1.0}):
            with pytest.raises(DomainError):
                BarrierConfig(**bad)

    def test_gap_target(self):
        prob = MonotoneProblem(np.full(100, -1e-12), 0.01)
        assert BarrierConfig(eps=1e-3).gap_target(prob) == 1e-3
        # with mu near 0 each unweighted test has power q
        assert BarrierConfig(eps_rel=1e-6).gap_target(prob) == pytest.approx(1e-6)


class TestFeasibleStart:
    def test_single(self):
        np.testing.assert_array_equal(feasible_start(1, 0.0, math.inf, 0.05), [1.0])

    def test_three_unbounded(self):
        np.testing.assert_allclose(feasible_start(3, 0.0, math.inf, 0.05), [0.1, 1.0, 1.9])

    def test_three_tight(self):
        np.testing.assert_allclose(feasible_start(3, 0.95, 1.05, 0.05), [0.955, 1.0, 1.045])

    def test_strict_and_sum(self):
        for n in (2, 10, 1001):
            w = feasible_start(n, 0.3, 1.7, 0.001)
            assert np.all(np.diff(w) > 0) and w[0] > 0.3 and w[-1] < 1.7
            assert w.sum() == pytest.approx(n, rel=1e-14)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            feasible_start(3, 1.0, 2.0, 0.05)
        with pytest.raises(DomainError):
            feasible_start(0, 0.0, 2.0, 0.05)


class TestCenteringDerivatives:
    def test_finite_differences(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 12))
            prob = random_problem(rng, n, q=10 ** rng.uniform(-3, -1.5))
            w = random_feasible(rng, prob)
            t = 10 ** rng.uniform(0, 2)
            d = centering_derivatives(w, t, prob)
            obj = lambda x: centering_derivatives(x, t, prob).objective  # noqa: E731
            h = 1e-6 * np.min(d.gaps)
            g_fd = np.array([(obj(w + h * e) - obj(w - h * e)) / (2 * h) for e in np.eye(n)])
            assert np.max(np.abs(d.grad - g_fd)) <= 1e-5 * np.max(np.abs(d.grad))
            H = d.hess.to_dense()
            h = 1e-3 * np.min(d.gaps)
            f0 = obj(w)
            for i in range(n):
                ei = np.eye(n)[i]
                hii = (obj(w + h * ei) - 2 * f0 + obj(w - h * ei)) / h**2
                assert hii == pytest.approx(H[i, i], rel=1e-3)
                if i + 1 < n:
                    ej = np.eye(n)[i + 1]
                    hij = (obj(w + h * (ei + ej)) - obj(w + h * (ei - ej))
                           - obj(w - h * (ei - ej)) + obj(w - h * (ei + ej))) / (4 * h * h)
                    assert hij == pytest.approx(H[i, i + 1], rel=1e-3)

    def test_curvature_positive(self, rng):
        prob = random_problem(rng, 30)
        d = centering_derivatives(feasible_start(30, 0.0, math.inf, prob.q), 5.0, prob)
        assert np.all(d.curvature > 0)

    def test_positive_definite_at_random_points(self, rng):
        for _ in range(100):
            prob = random_problem(rng, int(rng.integers(2, 30)))
            w = random_feasible(rng, prob)
            hess = centering_derivatives(w, 10 ** rng.uniform(-1, 6), prob).hess
            assert np.all(hess.pivots() > 0)
            assert np.all(np.linalg.eigvalsh(hess.to_dense()) > 0)
            x = rng.standard_normal(prob.size)
            assert hess.quadratic_form(x) > 0

    def test_infeasible(self):
        prob = MonotoneProblem(np.array([-1.0, -2.0]), 0.05)
        with pytest.raises(InfeasibleError):
            centering_derivatives(np.array([1.2, 0.8]), 1.0, prob)


class TestKkt:
    def test_identity(self):
        dw, nu = kkt_newton_step(np.array([1.0, -1.0]),
                                 TridiagonalMatrix.symmetric(np.ones(2), np.zeros(1)))
        assert nu == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(dw, [-1.0, 1.0])

    def test_diagonal(self):
        dw, nu = kkt_newton_step(np.array([1.0, 1.0]),
                                 TridiagonalMatrix.symmetric(np.array([1.0, 2.0]), np.zeros(1)))
        assert nu == pytest.approx(-1.0)
        np.testing.assert_allclose(dw, [0.0, 0.0], atol=1e-15)

    def test_dense_oracle(self, rng):
        for _ in range(20):
            off = rng.uniform(-1, 0, 5)
            diag = np.abs(np.r_[0, off]) + np.abs(np.r_[off, 0]) + rng.uniform(0.1, 1, 6)
            hess = TridiagonalMatrix.symmetric(diag, off)
            grad = rng.standard_normal(6)
            dw, nu = kkt_newton_step(grad, hess)
            dw_ref, nu_ref = dense_kkt(hess, grad)
            np.testing.assert_allclose(dw, dw_ref, rtol=1e-9, atol=1e-12)
            assert nu == pytest.approx(nu_ref, rel=1e-9)
            assert kkt_residual(grad, hess, dw, nu) <= 1e-9
            assert abs(dw.sum()) <= 1e-9 * 6


class TestDecrement:
    def test_zero(self):
        assert newton_decrement(np.zeros(3), TridiagonalMatrix.symmetric(np.ones(3), np.zeros(2))) == 0.0

    def test_identity(self):
        H = TridiagonalMatrix.symmetric(np.ones(2), np.zeros(1))
        assert newton_decrement(np.array([3.0, 4.0]), H) == pytest.approx(5.0)

    def test_dense_oracle(self, rng):
        off = rng.uniform(-1, 0, 4)
        diag = np.abs(np.r_[0, off]) + np.abs(np.r_[off, 0]) + 1.0
        H = TridiagonalMatrix.symmetric(diag, off)
        x = rng.standard_normal(5)
        assert newton_decrement(x, H) == pytest.approx(math.sqrt(x @ H.to_dense() @ x), rel=1e-12)


class TestBacktracking:
    def test_full_step_near_optimum(self, rng):
        prob = random_problem(rng, 20)
        cfg = BarrierConfig()
        w, _ = solve_centering(feasible_start(20, 0, math.inf, prob.q), 10.0, prob, cfg)
        d = centering_derivatives(w, 10.0, prob)
        dw, _ = kkt_newton_step(d.grad, d.hess)
        if np.max(np.abs(dw)) > 0:
            assert backtracking_search(w, dw, 10.0, prob, deriv=d) == 1.0

    def test_feasibility_first(self):
        prob = MonotoneProblem(np.array([-1.0, -2.0, -3.0]), 0.05)
        w = np.array([0.5, 1.0, 1.5])
        dw = np.array([-1.0, 0.0, 1.0])  # w1 hits 0 at s = 0.5
        s = backtracking_search(w, dw, 1.0, prob, deriv=None, slope=-1.0)
        assert s < 0.5
        assert w[0] + s * dw[0] > 0

    def test_armijo_certificate(self, rng):
        for _ in range(20):
            prob = random_problem(rng, 15)
            w = random_feasible(rng, prob)
            t = 10 ** rng.uniform(0, 2)
            d = centering_derivatives(w, t, prob)
            dw, _ = kkt_newton_step(d.grad, d.hess)
            s = backtracking_search(w, dw, t, prob, 0.01, 0.5, d)
            new = centering_derivatives(w + s * dw, t, prob).objective
            assert new <= d.objective + 0.01 * s * float(d.grad @ dw) + 1e-12 * abs(d.objective)

    def test_ascent_direction(self):
        prob = MonotoneProblem(np.array([-1.0, -2.0]), 0.05)
        w = np.array([0.8, 1.2])
        d = centering_derivatives(w, 1.0, prob)
        dw, _ = kkt_newton_step(d.grad, d.hess)
        with pytest.raises(LineSearchError):
            backtracking_search(w, -dw, 1.0, prob, deriv=d)


class TestCentering:
    def test_symmetric_start(self):
        # with J = 1 the point e is the only feasible one: no step is needed
        prob = MonotoneProblem(np.array([-1.5]), 0.005)
        steps = []
        w, n = solve_centering(np.ones(1), 1.0, prob, BarrierConfig(), callback=steps.append)
        assert n <= 3 and steps[-1].decrement == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_array_equal(w, [1.0])

    def test_restart_at_center(self):
        # for J > 1, e itself lies on the monotone boundary; restarting from
        # the central point of an equal-effects instance must stop at once
        prob = MonotoneProblem(np.full(10, -1.5), 0.005)
        cfg = BarrierConfig()
        w, _ = solve_centering(feasible_start(10, 0, math.inf, 0.005), 1.0, prob, cfg)
        np.testing.assert_allclose(w.mean(), 1.0, rtol=1e-12)
        _, n = solve_centering(w, 1.0, prob, cfg)
        assert n <= 3

    def test_random_instance(self, rng):
        prob = random_problem(rng, 50)
        cfg = BarrierConfig()
        states = []
        w, _ = solve_centering(feasible_start(50, 0, math.inf, prob.q), 10.0, prob, cfg,
                               callback=states.append)
        last = states[-1]
        assert last.decrement ** 2 / 2 < cfg.newton_tol
        d = centering_derivatives(w, 10.0, prob)
        nu = -d.grad.mean()
        # stationarity residual relative to the size of the gradient's terms
        scale = np.max(10.0 * roc_grad(w, prob.mu, prob.q)) + np.max(1.0 / d.gaps)
        assert np.max(np.abs(d.grad + nu)) / scale <= 1e-6
        objectives = [centering_derivatives(s.w, 10.0, prob).objective for s in states]
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(objectives, objectives[1:]))
        for s in states:
            assert abs(s.w.sum() - 50) <= 1e-9 * 50


class TestSolveMonotone:
    def test_equal_effects(self):
        res = solve_monotone(MonotoneProblem(np.full(40, -1.2), 1e-3))
        np.testing.assert_allclose(res.weights.w, 1.0, atol=1e-6)

    def test_single(self):
        np.testing.assert_array_equal(solve_monotone(MonotoneProblem(np.array([-1.0]), 0.05)).weights.w, [1.0])

    def test_matches_spjotvoll_small_q(self, rng):
        mu = -np.abs(rng.standard_normal(1000))
        w_m = monotone_weights(mu, 1e-7).weights.w
        w_s = spjotvoll_one_sided(mu, 1e-7).weights.w
        assert np.max(np.abs(w_m - w_s)) <= 1e-3

    def test_grid_oracle_bounded(self):
        res = solve_monotone(MonotoneProblem(np.array([-1.0, -3.0]), 0.05, 0.5, 1.5))
        np.testing.assert_allclose(res.weights.w, GRID_MONOTONE_J2, atol=1e-3)

    def test_certificate_against_grid(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 4))
            prob = random_problem(rng, n, q=10 ** rng.uniform(-3, -1.5),
                                  lower=rng.uniform(0, 0.9), upper=rng.uniform(1.2, 5))
            cfg = BarrierConfig()
            res = solve_monotone(prob, cfg)
            assert res.gap <= cfg.gap_target(prob)
            # grid over the feasible polytope: l <= w1 <= ... <= wJ <= cap, sum = J
            g = np.linspace(prob.lower, prob.cap, 801)
            if n == 2:
                W = np.column_stack((g, n - g))
            else:
                A, B = np.meshgrid(g, g, indexing="ij")
                W = np.column_stack((A.ravel(), B.ravel(), n - A.ravel() - B.ravel()))
            ok = np.all(np.diff(W, axis=1) >= 0, axis=1) & (W[:, 0] >= prob.lower) & (W[:, -1] <= prob.cap)
            best = np.max(sum(roc_value(W[ok, i], prob.mu[i], prob.q) for i in range(n)))
            found = power_of_weights(res.weights.w, prob.mu, prob.q)
            assert found >= best - res.gap - 1e-12

    def test_feasibility(self, rng):
        for lower, upper in [(0.0, math.inf), (0.5, math.inf), (0.1, 2.0), (0.9, 1.1)]:
            prob = random_problem(rng, 300, q=1e-4, lower=lower, upper=upper)
            w = solve_monotone(prob).weights.w
            assert w[0] >= lower - 1e-8 and w[-1] <= prob.cap + 1e-8
            assert np.all(np.diff(w) >= -1e-8)
            assert abs(w.sum() - 300) <= 1e-8 * 300

    def test_t0_invariance(self, rng):
        prob = random_problem(rng, 200, q=1e-4, lower=0.2, upper=5.0)
        cfg = BarrierConfig()
        a = solve_monotone(prob, cfg)
        b = solve_monotone(prob, replace(cfg, t0=10.0))
        pa = power_of_weights(a.weights.w, prob.mu, prob.q)
        pb = power_of_weights(b.weights.w, prob.mu, prob.q)
        assert abs(pa - pb) <= 2 * cfg.gap_target(prob)

    def test_flat_prefix_with_lower_bound(self, rng):
        mu = -np.abs(rng.standard_normal(1000))
        w = monotone_weights(mu, 1e-7, lower=0.5).weights.w
        w = w[np.argsort(-mu, kind="stable")]
        assert np.all(np.diff(w) >= -1e-8)
        assert np.sum(np.abs(w - 0.5) <= 1e-6) >= 1
        assert abs(w[0] - 0.5) <= 1e-6

    def test_size_limit(self, rng):
        prob = random_problem(rng, 50)
        with pytest.raises(DomainError):
            solve_monotone(prob, BarrierConfig(subsample_L=10))

    def test_failure_is_solver_error(self, rng):
        prob = random_problem(rng, 50)
        with pytest.raises(SolverError, match="subsample"):
            solve_monotone(prob, BarrierConfig(max_newton=1, center_slack=0.0))


class TestSubsample:
    def test_delegates_when_small(self, rng):
        prob = random_problem(rng, 100, q=1e-4)
        a = subsample_solve(prob)
        b = solve_monotone(prob)
        np.testing.assert_array_equal(a.weights.w, b.weights.w)
        assert not a.subsampled

    def test_near_ties_collapse(self):
        mu = -1.0 - 1e-8 * np.arange(50)
        res = subsample_solve(MonotoneProblem(mu, 1e-3), BarrierConfig(subsample_L=10))
        assert res.subsampled and res.knots == 1
        np.testing.assert_array_equal(res.weights.w, np.ones(50))

    def test_interpolated_output(self, rng):
        prob = random_problem(rng, 3000, q=1e-5, lower=0.1)
        res = subsample_solve(prob, BarrierConfig(subsample_L=500))
        w = res.weights.w
        assert res.subsampled and res.knots <= 500
        assert abs(w.sum() - 3000) <= 1e-8 * 3000
        assert np.all(np.diff(w) >= -1e-12)
        assert w.min() >= 0.1 - 1e-12

    def test_caller_order(self, rng):
        mu = -np.abs(rng.standard_normal(200))
        w = monotone_weights(mu, 1e-4).weights.w
        order = np.argsort(np.abs(mu), kind="stable")
        assert np.all(np.diff(w[order]) >= -1e-8)


class TestPower:
    def test_null_limit(self):
        assert power_of_weights(np.ones(4), -1e-12 * np.ones(4), 0.01) == pytest.approx(0.04, rel=1e-9)

    def test_zero_weights(self):
        assert power_of_weights(np.zeros(3), -np.ones(3), 0.01) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            power_of_weights(np.ones(3), -np.ones(2), 0.01)

    def test_ordering(self, rng):
        mu = -np.abs(rng.standard_normal(500))
        q = 1e-5
        p_un = power_of_weights(np.ones(500), mu, q)
        p_mon = power_of_weights(monotone_weights(mu, q, 0.1, 10.0).weights.w, mu, q)
        p_opt = power_of_weights(spjotvoll_one_sided(mu, q).weights.w, mu, q)
        assert p_un <= p_mon + 1e-9 and p_mon <= p_opt + 1e-9
