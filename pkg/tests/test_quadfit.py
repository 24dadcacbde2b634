import numpy as np
import pytest

from engress import quadfit, simulate
from engress.core import Rng
from engress.errors import DomainError
from engress.losses import cramer_distance_exact


class TestCramerIdentity:
    def test_value_matches_exact_breakpoint_integral(self):
        rng = Rng(0)
        atoms = np.sort(rng.normal(size=31))
        ys = np.sort(rng.normal(size=200) + 0.3)
        ys_sorted, pref = quadfit._sorted_prefix(ys)
        ypm = quadfit._self_pair_mean_abs(ys_sorted, pref)
        val, _ = quadfit._cramer_value_and_atom_grad(atoms, ys_sorted, pref, ypm)
        assert val == pytest.approx(cramer_distance_exact(atoms, ys), rel=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = Rng(1)
        atoms = rng.normal(size=15)
        ys = rng.normal(size=60)
        ys_sorted, pref = quadfit._sorted_prefix(ys)
        ypm = quadfit._self_pair_mean_abs(ys_sorted, pref)
        _, grad = quadfit._cramer_value_and_atom_grad(atoms, ys_sorted, pref, ypm)
        eps = 1e-7
        for k in range(atoms.size):
            up = atoms.copy(); up[k] += eps
            dn = atoms.copy(); dn[k] -= eps
            vu, _ = quadfit._cramer_value_and_atom_grad(up, ys_sorted, pref, ypm)
            vd, _ = quadfit._cramer_value_and_atom_grad(dn, ys_sorted, pref, ypm)
            assert grad[k] == pytest.approx((vu - vd) / (2 * eps), abs=1e-6)


class TestTwoPointFit:
    @pytest.fixture(scope="class")
    def well_specified_fit(self):
        setting = simulate.SimSetting(kind="quadratic_two_point")
        x, y, _ = simulate.generate(setting, 8000, Rng(5))
        m1 = x[:, 0] == setting.x1
        fit = quadfit.fit_two_point_cramer(setting.x1, setting.x2,
                                           y[m1, 0], y[~m1, 0])
        return setting, fit

    def test_recovers_parameters(self, well_specified_fit):
        setting, fit = well_specified_fit
        assert np.linalg.norm(fit.beta - np.array(setting.beta)) < 0.12

    def test_recovers_noise_quantiles(self, well_specified_fit):
        setting, fit = well_specified_fit
        true_q = -setting.eta_max + 2 * setting.eta_max * fit.alphas
        assert float(np.mean(np.abs(fit.noise_quantiles - true_q))) < 0.05

    def test_noise_table_monotone_and_centered(self, well_specified_fit):
        _, fit = well_specified_fit
        assert np.all(np.diff(fit.noise_quantiles) >= 0)
        assert fit.noise_quantiles[fit.alphas.size // 2] == pytest.approx(0.0, abs=1e-12)

    def test_conditional_quantile_interpolation(self, well_specified_fit):
        setting, fit = well_specified_fit
        from engress import oracle

        noise = oracle.NoiseDist.uniform(setting.eta_max)
        for alpha in (0.25, 0.5, 0.75):
            truth = oracle.quadratic_truth(setting.beta, noise, setting.x1,
                                           alpha=alpha)["quantile"]
            assert fit.conditional_quantile(setting.x1, alpha) == pytest.approx(
                truth, abs=0.1
            )

    def test_trace_decreases(self, well_specified_fit):
        _, fit = well_specified_fit
        head = float(np.mean(fit.trace[:20]))
        tail = float(np.mean(fit.trace[-20:]))
        assert tail < head

    def test_deterministic(self):
        setting = simulate.SimSetting(kind="quadratic_two_point")
        x, y, _ = simulate.generate(setting, 1000, Rng(6))
        m1 = x[:, 0] == setting.x1
        f1 = quadfit.fit_two_point_cramer(setting.x1, setting.x2, y[m1, 0], y[~m1, 0],
                                          steps=400)
        f2 = quadfit.fit_two_point_cramer(setting.x1, setting.x2, y[m1, 0], y[~m1, 0],
                                          steps=400)
        assert np.array_equal(f1.beta, f2.beta)
        assert np.array_equal(f1.noise_quantiles, f2.noise_quantiles)

    def test_validation(self):
        with pytest.raises(DomainError):
            quadfit.fit_two_point_cramer(2.0, 1.0, [1.0, 2.0], [1.0, 2.0])
        with pytest.raises(DomainError):
            quadfit.fit_two_point_cramer(1.0, 2.0, [1.0], [1.0, 2.0])
        with pytest.raises(DomainError):
            quadfit.fit_two_point_cramer(1.0, 2.0, [1.0, 2.0], [1.0, 2.0], grid_size=100)


class TestMisspecified:
    def test_quadratic_coefficient_shrinks(self):
        # post-ANM data: the pre-ANM fit collapses toward the linear model
        setting = simulate.SimSetting(kind="quadratic_postanm_misspec")
        x, y, _ = simulate.generate(setting, 12000, Rng(7))
        m1 = x[:, 0] == setting.x1
        fit = quadfit.fit_two_point_cramer(setting.x1, setting.x2, y[m1, 0], y[~m1, 0])
        b = setting.beta
        assert abs(fit.beta[2]) < 0.05
        assert fit.beta[1] == pytest.approx(b[1] + b[2] * (setting.x1 + setting.x2),
                                            abs=0.1)
        assert fit.beta[0] == pytest.approx(b[0] - b[2] * setting.x1 * setting.x2,
                                            abs=0.15)
