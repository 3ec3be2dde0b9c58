import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate, special, stats

from hslike.errors import DomainError, QuadratureError
from hslike.prior import (
    MixtureKind,
    PenaltySpec,
    QuadratureConfig,
    fvp_density,
    horseshoe_density_quadrature,
    hs_bounds,
    hslike_density,
    hslike_penalty,
    hslike_penalty_deriv,
    marginal_density,
    mixing_density_u,
    mixture_check,
    sample_pareto_half,
    sample_slash_normal,
    slash_normal_cdf,
    slash_normal_pdf,
)

mp.mp.dps = 40


def hs_exact(theta, tau):
    # closed form via the exponential integral, evaluated in high precision
    r2 = mp.mpf(theta) ** 2 / mp.mpf(tau) ** 2
    return float(mp.exp(r2 / 2) * mp.e1(r2 / 2) / (mp.mpf(tau) * mp.sqrt(2 * mp.pi ** 3)))


class TestSpecs:
    def test_tau_roundtrip(self):
        s = PenaltySpec.from_tau(0.7)
        assert s.a == pytest.approx(2 * 0.49)
        assert s.tau == pytest.approx(0.7)

    @pytest.mark.parametrize("a", [0.0, -1.0, np.inf, np.nan])
    def test_bad_a(self, a):
        with pytest.raises(DomainError):
            PenaltySpec(a)

    def test_bad_quadrature_config(self):
        with pytest.raises(DomainError):
            QuadratureConfig(rel_tol=0)
        with pytest.raises(DomainError):
            QuadratureConfig(abs_tol=-1)
        with pytest.raises(DomainError):
            QuadratureConfig(max_subdivisions=0)
        with pytest.raises(DomainError):
            QuadratureConfig(rel_tol=1e-16)


class TestHsLikeDensity:
    def test_value_at_one(self):
        spec = PenaltySpec(1.0)
        assert hslike_density(1.0, spec) == pytest.approx(math.log(2) / (2 * math.pi), rel=1e-14)
        # the normal mixture over u reproduces it
        mix, direct, gap = mixture_check(MixtureKind.NORMAL_FRULLANI, 1.0, spec)
        assert gap < 1e-8

    def test_pole_and_symmetry(self):
        spec = PenaltySpec(1.0)
        assert hslike_density(0.0, spec) == np.inf
        assert hslike_density(-1.0, spec) == hslike_density(1.0, spec)

    def test_non_finite_theta(self):
        with pytest.raises(DomainError):
            hslike_density(np.nan, PenaltySpec(1.0))

    def test_decreasing_and_tail(self):
        spec = PenaltySpec(3.0)
        grid = np.logspace(-3, 3, 200)
        p = hslike_density(grid, spec)
        assert np.all(np.diff(p) < 0)
        big = 1e7
        assert big ** 2 * hslike_density(big, spec) == pytest.approx(math.sqrt(3.0) / (2 * math.pi), rel=1e-6)

    def test_normalized(self):
        spec = PenaltySpec(0.8)
        val = 2 * integrate.quad(lambda t: hslike_density(t, spec), 0, np.inf, limit=200)[0]
        assert val == pytest.approx(1.0, abs=1e-8)


class TestPenalty:
    def test_loglog_root(self):
        theta = math.sqrt(2 / (math.e - 1))
        assert hslike_penalty(theta, PenaltySpec.from_tau(1.0)) == pytest.approx(0.0, abs=1e-14)

    def test_value(self):
        expected = float(-mp.log(mp.log(3)))
        assert hslike_penalty(1.0, PenaltySpec.from_tau(1.0)) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(-0.09405, abs=1e-5)

    def test_matches_log_density_up_to_constant(self):
        spec = PenaltySpec(1.7)
        th = np.linspace(0.1, 9, 30)
        shift = hslike_penalty(th, spec) + np.log(2 * math.pi * math.sqrt(spec.a) * hslike_density(th, spec))
        np.testing.assert_allclose(shift, 0.0, atol=1e-13)

    def test_pole_and_growth(self):
        spec = PenaltySpec.from_tau(1.0)
        assert hslike_penalty(0.0, spec) == -np.inf
        grid = np.logspace(-3, 6, 100)
        assert np.all(np.diff(hslike_penalty(grid, spec)) > 0)


class TestPenaltyDerivative:
    def test_reference_value(self):
        spec = PenaltySpec.from_tau(1 / math.sqrt(2))
        assert hslike_penalty_deriv(1.0, spec) == pytest.approx(1 / math.log(2), rel=1e-14)

    def test_even(self):
        spec = PenaltySpec.from_tau(1.3)
        assert hslike_penalty_deriv(-2.5, spec) == hslike_penalty_deriv(2.5, spec)

    def test_zero_raises(self):
        with pytest.raises(DomainError):
            hslike_penalty_deriv(0.0, PenaltySpec(1.0))

    @pytest.mark.parametrize("tau", [0.1, 1.0, 10.0])
    def test_central_difference(self, tau):
        spec = PenaltySpec.from_tau(tau)
        for th in np.logspace(-3, 3, 61):
            h = 1e-6 * th
            fd = (hslike_penalty(th + h, spec) - hslike_penalty(th - h, spec)) / (2 * h)
            assert hslike_penalty_deriv(th, spec) == pytest.approx(fd, rel=1e-5)

    def test_tail_decay(self):
        # decays like 2/|theta| for large |theta|
        spec = PenaltySpec.from_tau(1.0)
        assert 1e6 * hslike_penalty_deriv(1e6, spec) == pytest.approx(2.0, rel=1e-5)
        th = np.logspace(-2, 8, 50)
        assert np.all(np.diff(hslike_penalty_deriv(th, spec)) < 0)


class TestHorseshoe:
    @pytest.mark.parametrize("theta,tau", [(0.01, 1), (0.3, 0.1), (1, 1), (2, 1), (5, 10), (100, 0.1), (7, 3)])
    def test_matches_closed_form(self, theta, tau):
        assert horseshoe_density_quadrature(theta, tau) == pytest.approx(hs_exact(theta, tau), rel=1e-10)

    def test_bracketed(self):
        for tau in (0.1, 1.0, 10.0):
            for th in np.logspace(-2, 2, 50):
                lo, hi = hs_bounds(th, tau)
                v = horseshoe_density_quadrature(th, tau)
                assert lo < v < hi

    def test_monotone(self):
        assert horseshoe_density_quadrature(5.0, 1.0) < horseshoe_density_quadrature(2.0, 1.0)

    def test_monte_carlo(self):
        rng = np.random.default_rng(11)
        lam = np.abs(rng.standard_cauchy(1_000_000))
        vals = stats.norm.pdf(1.0, scale=lam)
        se = vals.std() / math.sqrt(vals.size)
        assert abs(vals.mean() - horseshoe_density_quadrature(1.0, 1.0)) < 3 * se

    def test_zero_raises(self):
        with pytest.raises(DomainError):
            horseshoe_density_quadrature(0.0, 1.0)

    def test_failure_reports_estimate(self):
        with pytest.raises(QuadratureError) as info:
            horseshoe_density_quadrature(0.5, 1.0, QuadratureConfig(rel_tol=1e-13, max_subdivisions=1))
        assert info.value.estimate is not None


class TestBounds:
    def test_reference_values_two_precisions(self):
        lo, hi = hs_bounds(1.0, 1.0)
        c = (2 * mp.pi) ** mp.mpf(1.5)
        assert lo == pytest.approx(float(mp.log(5) / c), rel=1e-12)
        assert hi == pytest.approx(float(2 * mp.log(3) / c), rel=1e-12)
        assert lo < hi

    def test_tail(self):
        lo, hi = hs_bounds(1e8, 1.0)
        assert lo < 1e-15 and hi < 1e-15

    def test_zero_raises(self):
        with pytest.raises(DomainError):
            hs_bounds(0.0, 1.0)


class TestMarginal:
    def test_value_at_zero(self):
        assert marginal_density(0.0, 1.0) == pytest.approx(math.log(4) / (2 * math.pi), rel=1e-14)

    @pytest.mark.parametrize("tau", [0.5, 1.0, 2.0, 5.0])
    def test_normalized(self, tau):
        val = 2 * integrate.quad(lambda y: marginal_density(y, tau), 0, np.inf, limit=200, epsrel=1e-12)[0]
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_tail(self):
        assert marginal_density(1e6, 1.0) < 1e-12

    def test_hierarchy_monte_carlo(self):
        # conditional-density Monte Carlo: given (sigma^2, lambda), y is a Voigt profile
        rng = np.random.default_rng(5)
        n, tau = 1_000_000, 1.0
        sigma2 = 1.0 / rng.gamma(0.5, 2.0, n)
        lam = rng.random(n)
        for y in (0.0, 1.0, 5.0):
            vals = special.voigt_profile(y, np.sqrt(sigma2), lam * tau)
            se = vals.std() / math.sqrt(n)
            assert abs(vals.mean() - marginal_density(y, tau)) < 3 * se


class TestMixtures:
    @pytest.mark.parametrize("kind", list(MixtureKind))
    @pytest.mark.parametrize("tau", [0.5, 2.0])
    def test_grid(self, kind, tau):
        spec = PenaltySpec.from_tau(tau)
        for th in np.linspace(0.05, 20, 20):
            _, _, gap = mixture_check(kind, th, spec)
            assert gap < 1e-6

    def test_spec_examples(self):
        assert mixture_check("CauchyUniform", 1.0, PenaltySpec.from_tau(1.0))[2] < 1e-8
        assert mixture_check("LaplaceFVP", 0.5, PenaltySpec.from_tau(1.0))[2] < 1e-6
        assert mixture_check("NormalFrullani", 2.0, PenaltySpec(2.0))[2] < 1e-8

    def test_mixing_laws_normalize(self):
        assert integrate.quad(mixing_density_u, 0, np.inf, limit=200)[0] == pytest.approx(1.0, abs=1e-8)
        tot = sum(integrate.quad(fvp_density, k * 2 * np.pi, (k + 1) * 2 * np.pi)[0] for k in range(20000))
        assert tot == pytest.approx(1.0, abs=2e-5)  # tail beyond 40000 pi is ~ 1e-5
        assert fvp_density(1e-9) == pytest.approx(1 / math.pi)

    def test_zero_raises(self):
        with pytest.raises(DomainError):
            mixture_check(MixtureKind.CAUCHY_UNIFORM, 0.0, PenaltySpec(1.0))


class TestSlashNormal:
    def test_pdf_limit(self):
        assert slash_normal_pdf(0.0) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)), rel=1e-14)
        assert slash_normal_pdf(1e-5) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)), rel=1e-9)

    def test_cdf_is_integral_of_pdf(self):
        for x in (-20.0, -3.0, -0.5, 0.0, 1e-7, 0.2, 2.0, 15.0):
            q = integrate.quad(slash_normal_pdf, -np.inf, x, limit=400, epsabs=1e-13)[0]
            assert slash_normal_cdf(x) == pytest.approx(q, abs=1e-9)

    def test_samples_ks(self):
        draws = sample_slash_normal(200_000, rng_seed=3)
        assert stats.kstest(draws, slash_normal_cdf).pvalue > 0.01

    def test_pareto_survival(self):
        v = sample_pareto_half(200_000, rng_seed=4)
        assert v.min() >= 1.0
        for q in (2.0, 10.0, 100.0):
            p = q ** -0.5
            emp = np.mean(v > q)
            assert abs(emp - p) < 3 * math.sqrt(p * (1 - p) / v.size)

    def test_reproducible(self):
        np.testing.assert_array_equal(sample_slash_normal(10, 1), sample_slash_normal(10, 1))

    def test_bad_n(self):
        with pytest.raises(DomainError):
            sample_slash_normal(0, 1)
