import math

import numpy as np
import pytest
from scipy import integrate

from engress import oracle
from engress.core import Rng
from engress.errors import DomainError
from engress.losses import cramer_distance_exact


UNIFORM2 = oracle.NoiseDist.uniform(2.0)


def uniform_mean_u_eng(lip, eta_max, delta):
    """Symbolic top-slice integral for Uniform(-eta_max, eta_max) noise.

    integral_{eta_max - delta}^{eta_max} (e - eta_max + delta) / (2 eta_max) de
    with the lower limit clipped to -eta_max.
    """
    lo = max(eta_max - delta, -eta_max)
    width = eta_max - lo
    # antiderivative of (e - eta_max + delta): quadratic in e
    return lip * (width * (lo - eta_max + delta) + width**2 / 2.0) / (2.0 * eta_max)


class TestNoiseDist:
    def test_uniform_cdf_quantile_inverse(self):
        alphas = np.linspace(0, 1, 11)
        qs = UNIFORM2.quantile(alphas)
        assert np.allclose(UNIFORM2.cdf(qs), alphas)

    def test_uniform_second_moment(self):
        assert UNIFORM2.second_moment() == pytest.approx(4.0 / 3.0)

    def test_trunc_gauss_second_moment_vs_quadrature(self):
        tg = oracle.NoiseDist.truncated_gaussian(1.0, 2.0)
        val, _ = integrate.quad(lambda t: t * t * float(tg.pdf(t)), -2, 2)
        assert tg.second_moment() == pytest.approx(val, abs=1e-10)

    def test_trunc_gauss_cdf_monotone_symmetric(self):
        tg = oracle.NoiseDist.truncated_gaussian(0.7, 1.5)
        t = np.linspace(-1.5, 1.5, 101)
        c = tg.cdf(t)
        assert np.all(np.diff(c) > 0)
        assert np.allclose(c + tg.cdf(-t), 1.0, atol=1e-12)

    def test_gaussian_unbounded(self):
        g = oracle.NoiseDist.gaussian(1.0)
        assert not g.bounded
        assert g.second_moment() == pytest.approx(1.0)


class TestMedianGain:
    def test_inside_noise_range(self):
        assert oracle.median_uncertainty_gain(1.0, 2.0, 1.0) == (0.0, 1.0, 1.0)

    def test_beyond_noise_range(self):
        assert oracle.median_uncertainty_gain(1.0, 2.0, 3.0) == (1.0, 3.0, 2.0)

    def test_gain_vanishes_at_zero(self):
        _, _, gain = oracle.median_uncertainty_gain(1.0, 2.0, 1e-12)
        assert gain == pytest.approx(0.0, abs=1e-11)

    def test_max_gain_attained(self):
        for delta in (2.0, 5.0, 100.0):
            assert oracle.median_uncertainty_gain(1.5, 2.0, delta)[2] == pytest.approx(3.0)


class TestMeanGain:
    def test_uniform_hand_integral(self):
        u_eng, u_base, gain = oracle.mean_uncertainty_gain(1.0, UNIFORM2, 1.0)
        assert u_eng == pytest.approx(0.125, abs=1e-10)
        assert u_base == 1.0
        assert gain == pytest.approx(0.875, abs=1e-10)

    def test_max_gain_beyond_twice_eta(self):
        for delta in (4.0, 7.0):
            _, _, gain = oracle.mean_uncertainty_gain(1.0, UNIFORM2, delta)
            assert gain == pytest.approx(2.0, abs=1e-9)

    def test_definitional_identity(self):
        for delta in np.linspace(0.1, 8.0, 25):
            u_eng, u_base, gain = oracle.mean_uncertainty_gain(1.0, UNIFORM2, delta)
            assert u_eng + gain == pytest.approx(u_base, abs=1e-9)

    def test_quadrature_matches_symbolic_on_grid(self):
        for delta in np.linspace(0.05, 20.0, 50):
            u_eng, _, _ = oracle.mean_uncertainty_gain(1.3, UNIFORM2, delta)
            assert u_eng == pytest.approx(uniform_mean_u_eng(1.3, 2.0, delta), abs=1e-8)

    def test_gaussian_rejected(self):
        with pytest.raises(DomainError):
            oracle.mean_uncertainty_gain(1.0, oracle.NoiseDist.gaussian(1.0), 1.0)


class TestDistGain:
    def test_ell_one_matches_mean_gain(self):
        for delta in (0.3, 1.0, 2.5, 6.0):
            mean_gain = oracle.mean_uncertainty_gain(1.0, UNIFORM2, delta)[2]
            dist_gain = oracle.dist_uncertainty_gain(1.0, UNIFORM2, delta, 1.0)[2]
            assert dist_gain == pytest.approx(mean_gain, abs=1e-9)

    def test_ell_infinity_zero_gain(self):
        for delta in (0.5, 2.0, 10.0):
            u_eng, u_base, gain = oracle.dist_uncertainty_gain(1.0, UNIFORM2, delta, math.inf)
            assert gain == 0.0
            assert u_eng == u_base

    def test_intermediate_ell_between_zero_and_ell1(self):
        for delta in np.geomspace(0.05, 20.0, 12):
            g1 = oracle.dist_uncertainty_gain(1.0, UNIFORM2, delta, 1.0)[2]
            for ell in (1.5, 2.0, 4.0):
                g = oracle.dist_uncertainty_gain(1.0, UNIFORM2, delta, ell)[2]
                assert 0.0 < g < g1

    def test_limit_gain_is_lip_times_eta(self):
        # (ell - 1) E[eta^2] / (2 delta) correction puts ell = 2 within 1e-3
        # of the limit at delta = 1000 * eta_max
        _, _, gain = oracle.dist_uncertainty_gain(1.0, UNIFORM2, 2000.0, 2.0)
        assert gain == pytest.approx(2.0, abs=1e-3)

    def test_monotone_approach_for_larger_ell(self):
        gains = [oracle.dist_uncertainty_gain(1.0, UNIFORM2, d, 7.0)[2]
                 for d in (10.0, 100.0, 1000.0, 10000.0)]
        assert all(a < b for a, b in zip(gains, gains[1:]))
        assert gains[-1] == pytest.approx(2.0, abs=1e-2)

    def test_invalid_ell(self):
        with pytest.raises(DomainError):
            oracle.dist_uncertainty_gain(1.0, UNIFORM2, 1.0, 0.5)


class TestGainPositivityAndSup:
    def test_positive_on_log_grid(self):
        deltas = np.geomspace(1e-3, 20.0, 40)
        for d in deltas:
            assert oracle.median_uncertainty_gain(1.0, 2.0, d)[2] > 0
            assert oracle.mean_uncertainty_gain(1.0, UNIFORM2, d)[2] > 0
            assert oracle.dist_uncertainty_gain(1.0, UNIFORM2, d, 2.0)[2] > 0

    def test_sup_equals_lip_eta(self):
        sup_median = max(oracle.median_uncertainty_gain(1.0, 2.0, d)[2]
                         for d in np.linspace(0.5, 10, 40))
        sup_mean = max(oracle.mean_uncertainty_gain(1.0, UNIFORM2, d)[2]
                       for d in np.linspace(0.5, 10, 40))
        assert sup_median == pytest.approx(2.0, abs=1e-9)
        assert sup_mean == pytest.approx(2.0, abs=1e-9)


class TestQuadraticTruth:
    def test_uniform_mean_value(self):
        out = oracle.quadratic_truth((0.0, 1.0, 1.0), oracle.NoiseDist.uniform(1.0), 2.0)
        assert out["mean"] == pytest.approx(19.0 / 3.0)

    def test_median_is_base_curve(self):
        out = oracle.quadratic_truth((0.3, 2.0, 0.5), UNIFORM2, 1.5, alpha=0.5)
        base = 0.3 + 2.0 * 1.5 + 0.5 * 1.5**2
        assert out["median"] == pytest.approx(base)
        assert out["quantile"] == pytest.approx(base)

    def test_mean_matches_monte_carlo(self):
        beta = (0.2, 1.0, 0.8)
        noise = oracle.NoiseDist.uniform(1.0)
        x = 2.0
        eta = noise.quantile(Rng(0).uniform(1_000_000))
        z = x + eta
        draws = beta[0] + beta[1] * z + beta[2] * z * z
        mc = draws.mean()
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        out = oracle.quadratic_truth(beta, noise, x)
        assert abs(out["mean"] - mc) < 3 * se + 1e-3

    def test_quantile_matches_monte_carlo(self):
        beta = (0.0, 1.0, 1.0)
        noise = oracle.NoiseDist.uniform(0.5)
        x = 2.0
        eta = noise.quantile(Rng(1).uniform(500_000))
        z = x + eta
        draws = beta[0] + beta[1] * z + beta[2] * z * z
        for alpha in (0.1, 0.25, 0.75, 0.9):
            out = oracle.quadratic_truth(beta, noise, x, alpha=alpha)
            # quantile MC standard error ~ sqrt(a(1-a)/n)/f(q) ~= 3.5e-3 here
            assert out["quantile"] == pytest.approx(
                float(np.quantile(draws, alpha)), abs=0.012
            )


class TestBounds:
    def test_dkw_value(self):
        assert oracle.dkw_cramer_bound(1.0, 0.05, 100) == pytest.approx(
            math.log(40.0) / 200.0
        )

    def test_dkw_halves_with_doubled_n(self):
        b1 = oracle.dkw_cramer_bound(2.0, 0.1, 500)
        b2 = oracle.dkw_cramer_bound(2.0, 0.1, 1000)
        assert b1 == pytest.approx(2 * b2)

    def test_dkw_high_probability_coverage(self):
        # ECDF of Unif(0,1) at n=100 stays below the bound in >= 95/100 seeds
        bound = oracle.dkw_cramer_bound(1.0, 0.05, 100)
        grid = np.linspace(0.0, 1.0, 4001)
        hits = 0
        for seed in range(100):
            u = np.sort(Rng(seed).uniform(100))
            ecdf = np.searchsorted(u, grid, side="right") / 100.0
            cd = float(np.trapezoid((ecdf - grid) ** 2, grid))
            hits += cd <= bound
        assert hits >= 95

    def test_quantile_gap_values(self):
        assert oracle.quantile_gap_bound(0.0, 2.0) == 0.0
        b = 1.7
        assert oracle.quantile_gap_bound(b * b / 3.0, b) == pytest.approx(1.0)

    def test_quantile_gap_dominates_actual_gap(self):
        # Unif(0,1) vs Unif(shift, 1+shift): sup quantile gap = shift
        for shift in (0.05, 0.2, 0.4):
            a = np.linspace(0, 1, 2001)
            b = a + shift
            cd = cramer_distance_exact(a, b)
            assert shift <= oracle.quantile_gap_bound(cd, 1.0) + 1e-9

    def test_validation(self):
        with pytest.raises(DomainError):
            oracle.dkw_cramer_bound(1.0, 1.5, 10)
        with pytest.raises(DomainError):
            oracle.quantile_gap_bound(-1.0, 1.0)
