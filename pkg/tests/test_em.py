import math
import time

import numpy as np
import pytest
from scipy import integrate

from hslike.em import (
    EmConfig,
    e_step_u,
    em_normal_means,
    em_regression,
    em_step_means,
    naive_solve,
    prior_variance,
    update_a,
    woodbury_solve,
)
from hslike.errors import DomainError, NumericalError, SingularSystemError
from hslike.problems import NormalMeansProblem, RegressionProblem


def dense_reference(X, d, y):
    return np.linalg.inv(X.T @ X + np.diag(d)) @ X.T @ y


class TestProblems:
    def test_means_validation(self):
        with pytest.raises(DomainError):
            NormalMeansProblem(np.array([]))
        with pytest.raises(DomainError):
            NormalMeansProblem(np.array([1.0, np.nan]))

    def test_regression_validation(self):
        with pytest.raises(DomainError):
            RegressionProblem(np.ones((3, 2)), np.ones(4))
        with pytest.raises(DomainError):
            RegressionProblem(np.ones(3), np.ones(3))
        p = RegressionProblem(np.ones((3, 2)), np.ones(3))
        assert (p.n, p.p) == (3, 2)


class TestEStep:
    def test_reference_value_by_quadrature(self):
        a, th = 1.0, 1.0
        q = integrate.quad(lambda u: math.exp(-u * th ** 2 / a) * (-math.expm1(-u)), 0, np.inf, epsrel=1e-13)[0]
        q /= 2 * math.pi * math.sqrt(a)
        assert e_step_u(th, a) == pytest.approx(q, abs=1e-10)
        assert e_step_u(th, a) == pytest.approx(1 / (4 * math.pi), rel=1e-14)

    def test_matches_unsimplified_form(self):
        a = 0.7
        th = np.linspace(0.1, 5, 20)
        direct = (a / th ** 2 - a / (th ** 2 + a)) / (2 * math.pi * math.sqrt(a))
        np.testing.assert_allclose(e_step_u(th, a), direct, rtol=1e-12)

    def test_limits_and_monotone(self):
        assert e_step_u(0.0, 1.0) == np.inf
        assert e_step_u(1e8, 1.0) < 1e-30
        assert e_step_u(0.5, 2.0) > e_step_u(1.0, 2.0)

    def test_bad_a(self):
        with pytest.raises(DomainError):
            e_step_u(1.0, 0.0)


class TestUpdateA:
    def test_reference(self):
        assert update_a(np.array([0.0]), 1.0) == pytest.approx(1 / math.pi, rel=1e-15)

    def test_identity_with_latent_form(self):
        # a_new = (1/n) sum 2 u_tilde theta^2 evaluated at a_prev
        th, a = np.array([0.3, 1.5, 4.0]), 0.8
        alt = np.mean(2 * e_step_u(th, a) * th ** 2)
        assert update_a(th, a) == pytest.approx(alt, rel=1e-13)

    def test_duplicate_and_small_a(self):
        assert update_a(np.array([2.0, 2.0]), 0.5) == pytest.approx(update_a(np.array([2.0]), 0.5), rel=1e-15)
        assert update_a(np.array([1.0]), 1e-12) < 1e-17

    def test_degenerate(self):
        with pytest.raises(NumericalError):
            update_a(np.array([np.inf, np.inf]), 1.0)
        with pytest.raises(DomainError):
            update_a(np.array([]), 1.0)


class TestWoodbury:
    def test_identity(self):
        y = np.array([1.0, -2.0, 4.0])
        np.testing.assert_allclose(woodbury_solve(np.eye(3), np.ones(3), y), y / 2, rtol=1e-15)

    def test_random_vs_dense(self):
        rng = np.random.default_rng(0)
        X, y, d = rng.standard_normal((10, 40)), rng.standard_normal(10), rng.uniform(0.1, 3, 40)
        np.testing.assert_allclose(woodbury_solve(X, d, y), dense_reference(X, d, y), atol=1e-8)
        np.testing.assert_allclose(naive_solve(X, d, y), dense_reference(X, d, y), atol=1e-8)

    def test_pinned_coordinates(self):
        rng = np.random.default_rng(1)
        X, y = rng.standard_normal((6, 9)), rng.standard_normal(6)
        d = rng.uniform(0.5, 2, 9)
        d[[2, 5]] = np.inf
        w = woodbury_solve(X, d, y)
        assert w[2] == 0.0 and w[5] == 0.0
        keep = np.isfinite(d)
        np.testing.assert_allclose(w[keep], dense_reference(X[:, keep], d[keep], y), atol=1e-10)
        np.testing.assert_allclose(naive_solve(X, d, y), w, atol=1e-10)

    def test_rejects_zero_precision(self):
        with pytest.raises(DomainError):
            woodbury_solve(np.eye(2), np.array([1.0, 0.0]), np.ones(2))

    def test_singular_naive(self):
        X = np.ones((2, 3))
        with pytest.raises(SingularSystemError):
            naive_solve(X, np.zeros(3), np.ones(2))


class TestNormalMeans:
    def test_zero_data(self):
        sol = em_normal_means(NormalMeansProblem(np.zeros(7)))
        np.testing.assert_array_equal(sol.theta_hat, 0.0)
        assert sol.a_hat > 0 and sol.support.size == 0

    def test_shrinkage_sign_and_trap(self):
        rng = np.random.default_rng(2)
        y = np.r_[rng.normal(0, 1, 80), rng.normal(4, 1, 20)]
        seen = []
        em_normal_means(NormalMeansProblem(y), callback=lambda it, th, a: seen.append(th.copy()))
        prev = y
        for th in seen:
            assert np.all(np.abs(th) <= np.abs(y))
            assert np.all((np.sign(th) == np.sign(y)) | (th == 0))
            # exact zeros are absorbing
            assert np.all(th[prev == 0] == 0)
            prev = th
        assert np.any(seen[-1] == 0)

    def test_fixed_point(self):
        rng = np.random.default_rng(3)
        y = np.r_[np.full(10, 5.0), np.zeros(90)] + rng.standard_normal(100)
        cfg = EmConfig()
        sol = em_normal_means(NormalMeansProblem(y), cfg)
        assert sol.converged and sol.iterations <= cfg.max_iter
        th, a = em_step_means(y, sol.theta_hat, sol.a_hat)
        assert np.max(np.abs(th - sol.theta_hat)) <= cfg.tol
        assert abs(a - sol.a_hat) <= cfg.tol

    def test_support_and_u(self):
        rng = np.random.default_rng(4)
        y = np.r_[np.full(5, 6.0), np.zeros(45)] + rng.standard_normal(50)
        sol = em_normal_means(NormalMeansProblem(y))
        np.testing.assert_array_equal(sol.support, np.flatnonzero(np.abs(sol.theta_hat) > 1e-6))
        np.testing.assert_allclose(sol.u_tilde, e_step_u(sol.theta_hat, sol.a_hat))
        assert set(range(5)) <= set(sol.support.tolist())

    def test_restarts_on_trap(self):
        y = np.full(30, 0.2)
        sol = em_normal_means(NormalMeansProblem(y), EmConfig(restarts=2))
        assert sol.restarts_used == 2
        assert sol.support.size == 0

    def test_objective_choice_across_restarts(self):
        sol = em_normal_means(NormalMeansProblem(np.full(30, 0.2)), EmConfig(restarts=1))
        assert len(sol.run_objectives) == 2

    def test_max_iter(self):
        y = np.r_[np.full(3, 3.0), np.full(17, 0.5)]
        sol = em_normal_means(NormalMeansProblem(y), EmConfig(max_iter=2, restarts=0))
        assert not sol.converged and sol.iterations == 2

    def test_explicit_start(self):
        with pytest.raises(DomainError):
            em_normal_means(NormalMeansProblem(np.ones(3)), EmConfig(theta_init=np.ones(4)))

    def test_bad_config(self):
        with pytest.raises(DomainError):
            EmConfig(tol=0)
        with pytest.raises(DomainError):
            EmConfig(max_iter=0)
        with pytest.raises(DomainError):
            EmConfig(solver="lu")

    def test_speed(self):
        rng = np.random.default_rng(5)
        y = np.r_[np.full(10, 3.0), np.full(10, -3.0), np.zeros(980)] + rng.standard_normal(1000)
        t0 = time.perf_counter()
        em_normal_means(NormalMeansProblem(y))
        assert time.perf_counter() - t0 < 1.0


class TestRegression:
    def test_identity_design_matches_means_each_iteration(self):
        rng = np.random.default_rng(6)
        y = np.r_[np.full(4, 4.0), np.zeros(26)] + rng.standard_normal(30)
        a, b = [], []
        em_normal_means(NormalMeansProblem(y), callback=lambda i, t, s: a.append((t.copy(), s)))
        em_regression(RegressionProblem(np.eye(30), y), EmConfig(theta_init="data"),
                      callback=lambda i, t, s: b.append((t.copy(), s)))
        assert len(a) == len(b)
        for (ta, sa), (tb, sb) in zip(a, b):
            np.testing.assert_array_equal(ta, tb)
            assert sa == sb

    def test_woodbury_and_naive_paths_agree(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((5, 8))
        y = X @ np.r_[3.0, -3.0, np.zeros(6)] + 0.1 * rng.standard_normal(5)
        s1 = em_regression(RegressionProblem(X, y), EmConfig(solver="woodbury"))
        s2 = em_regression(RegressionProblem(X, y), EmConfig(solver="naive"))
        np.testing.assert_allclose(s1.theta_hat, s2.theta_hat, atol=1e-8)

    def test_fixed_point_woodbury(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((30, 60))
        y = X @ np.r_[np.full(3, 3.0), np.zeros(57)] + rng.standard_normal(30)
        cfg = EmConfig()
        sol = em_regression(RegressionProblem(X, y), cfg)
        trace = []
        em_regression(RegressionProblem(X, y), EmConfig(theta_init=sol.theta_hat, a_init=sol.a_hat, max_iter=1),
                      callback=lambda i, t, a: trace.append((t, a)))
        assert np.max(np.abs(trace[0][0] - sol.theta_hat)) <= 10 * cfg.tol

    def test_recovers_strong_signal(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((50, 100))
        beta = np.r_[5.0, -5.0, 4.0, np.zeros(97)]
        sol = em_regression(RegressionProblem(X, X @ beta + 0.5 * rng.standard_normal(50)))
        assert {0, 1, 2} <= set(sol.support.tolist())

    def test_data_start_needs_square(self):
        with pytest.raises(DomainError):
            em_regression(RegressionProblem(np.ones((3, 4)), np.ones(3)), EmConfig(theta_init="data"))


def test_prior_variance_zero_at_origin():
    assert prior_variance(0.0, 1.0) == 0.0
    assert prior_variance(1.0, 1.0) == pytest.approx(2 * math.pi)
