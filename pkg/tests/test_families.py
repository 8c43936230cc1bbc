"""Tests for the likelihood/penalty family catalog and its moment formulas."""

import math

import numpy as np
import pytest
import scipy.integrate as si
from scipy.special import expit

from vmmix import families as F
from vmmix.exceptions import DomainError, KinkError, UnsupportedMixing


def fd_central(fun, x, h=1e-6):
    return (fun(x + h) - fun(x - h)) / (2.0 * h)


class TestLossValues:
    def test_logistic_at_zero(self):
        fam = F.likelihood_family("logistic")
        assert F.f_value(fam, 0.0) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_logistic_decreases_in_margin(self):
        fam = F.likelihood_family("logistic")
        z = np.linspace(-5, 5, 41)
        assert np.all(np.diff(fam.value(z)) < 0)

    def test_check_loss_value(self):
        fam = F.likelihood_family("check_loss", q=0.9)
        assert F.f_value(fam, 1.0) == pytest.approx(1.8)
        assert F.f_value(fam, -1.0) == pytest.approx(0.2)

    def test_hinge_vanishes_beyond_margin(self):
        fam = F.likelihood_family("svm_hinge")
        assert F.f_value(fam, 2.0) == 0.0
        assert F.f_value(fam, 0.0) == pytest.approx(2.0)

    def test_squared_error_scale(self):
        fam = F.likelihood_family("squared_error", sigma=2.0)
        assert F.f_value(fam, 2.0) == pytest.approx(0.5)

    def test_absolute_error_scale(self):
        fam = F.likelihood_family("absolute_error", sigma=2.0)
        assert F.f_value(fam, -3.0) == pytest.approx(1.5)


class TestLossDerivatives:
    def test_logistic_deriv_sign(self):
        # The loss decreases in the margin, so f'(0) = sigmoid(0) - 1 = -1/2.
        fam = F.likelihood_family("logistic")
        assert F.f_deriv(fam, 0.0) == pytest.approx(-0.5)

    def test_check_loss_deriv(self):
        fam = F.likelihood_family("check_loss", q=0.9)
        assert F.f_deriv(fam, -1.0) == pytest.approx(-0.2)
        assert F.f_deriv(fam, 1.0) == pytest.approx(1.8)

    def test_squared_deriv_consistent_with_value(self):
        fam = F.likelihood_family("squared_error")
        assert F.f_deriv(fam, 3.0) == pytest.approx(3.0)

    @pytest.mark.parametrize("kind,kwargs", [
        ("squared_error", {"sigma": 1.3}),
        ("absolute_error", {"sigma": 0.7}),
        ("check_loss", {"q": 0.3}),
        ("svm_hinge", {}),
        ("logistic", {}),
        ("hyperbolic", {"alpha": 1.5, "kappa": -0.4}),
    ])
    def test_matches_finite_differences(self, kind, kwargs):
        fam = F.likelihood_family(kind, **kwargs)
        rng = np.random.default_rng(7)
        pts = rng.uniform(-4, 4, size=100)
        # keep away from kinks
        pts = pts[np.abs(pts - fam.mu_z) > 1e-3]
        for z in pts:
            num = fd_central(fam.value, z)
            assert fam.deriv(z) == pytest.approx(num, rel=1e-6, abs=1e-8)

    def test_kink_raises(self):
        fam = F.likelihood_family("check_loss", q=0.5)
        with pytest.raises(KinkError):
            F.f_deriv(fam, 1e-12)
        hinge = F.likelihood_family("svm_hinge")
        with pytest.raises(KinkError) as err:
            hinge.deriv(np.array([0.0, 1.0 + 1e-12]))
        assert err.value.indices == (1,)


class TestPenalties:
    def test_ridge_value_and_deriv(self):
        fam = F.penalty_family("ridge", tau=1.0)
        assert F.g_value(fam, 2.0) == pytest.approx(2.0)
        assert F.g_deriv(fam, 2.0) == pytest.approx(2.0)

    def test_lasso_value_and_deriv(self):
        fam = F.penalty_family("lasso", tau=2.0)
        assert F.g_value(fam, -1.0) == pytest.approx(0.5)
        assert F.g_deriv(fam, -1.0) == pytest.approx(-0.5)

    def test_double_pareto(self):
        fam = F.penalty_family("double_pareto", tau=1.0, a=2.0)
        assert F.g_value(fam, 1.0) == pytest.approx(3.0 * math.log(1.5), rel=1e-12)
        assert F.g_deriv(fam, 1.0) == pytest.approx(1.0)
        assert F.g_deriv(fam, 1.0) == pytest.approx(fd_central(fam.value, 1.0), rel=1e-8)

    def test_penalty_fd_grid(self):
        rng = np.random.default_rng(11)
        fams = [F.penalty_family("ridge", tau=0.8),
                F.penalty_family("lasso", tau=1.7),
                F.penalty_family("hyperbolic", tau=1.1, alpha=2.0, kappa=0.6),
                F.penalty_family("double_pareto", tau=0.9, a=3.0)]
        for fam in fams:
            for b in rng.uniform(0.05, 3.0, size=25) * rng.choice([-1, 1], 25):
                assert fam.deriv(b) == pytest.approx(
                    fd_central(fam.value, b), rel=1e-6, abs=1e-8)

    def test_lasso_kink(self):
        fam = F.penalty_family("lasso", tau=1.0)
        with pytest.raises(KinkError):
            F.g_deriv(fam, 0.0)


class TestMoments:
    def test_logistic_limit(self):
        fam = F.likelihood_family("logistic")
        assert F.omega_moment(fam, 0.0) == pytest.approx(0.25, abs=1e-15)
        # §-style closed form away from zero
        z = 1.7
        assert F.omega_moment(fam, z) == pytest.approx((expit(z) - 0.5) / z, rel=1e-12)

    def test_check_loss_inverse_residual(self):
        fam = F.likelihood_family("check_loss", q=0.5)
        assert F.omega_moment(fam, 0.5) == pytest.approx(2.0)

    def test_hinge_moment(self):
        fam = F.likelihood_family("svm_hinge")
        assert F.omega_moment(fam, 3.0) == pytest.approx(0.5)
        assert F.omega_moment(fam, 1.0) == F.MOMENT_CAP

    def test_squared_moment_is_one(self):
        fam = F.likelihood_family("squared_error", sigma=3.0)
        assert np.all(F.omega_moment(fam, np.linspace(-5, 5, 7)) == 1.0)

    def test_cap_applies(self):
        fam = F.likelihood_family("check_loss", q=0.2)
        assert F.omega_moment(fam, 1e-15) == F.MOMENT_CAP

    def test_ridge_lambda_constant(self):
        fam = F.penalty_family("ridge", tau=0.3)
        assert np.all(F.lambda_moment(fam, np.array([-2.0, 0.1, 5.0])) == 1.0)

    def test_lasso_lambda(self):
        fam = F.penalty_family("lasso", tau=1.0)
        assert F.lambda_moment(fam, 0.5) == pytest.approx(2.0)

    def test_double_pareto_lambda(self):
        fam = F.penalty_family("double_pareto", tau=1.0, a=2.0)
        assert F.lambda_moment(fam, 1.0) == pytest.approx(1.0)

    def test_infinite_at_prior_mean(self):
        for fam in (F.penalty_family("lasso", tau=1.0),
                    F.penalty_family("double_pareto", tau=1.0, a=2.0),
                    F.penalty_family("hyperbolic", tau=1.0, alpha=1.0, kappa=0.2)):
            assert np.isinf(F.lambda_moment(fam, 0.0))

    def test_moment_identity_all_families(self):
        """(z - mu_z) * omega(z) == kappa_z + sigma^2 f'(z) away from kinks."""
        fams = [F.likelihood_family("squared_error", sigma=1.4),
                F.likelihood_family("absolute_error", sigma=0.8),
                F.likelihood_family("check_loss", q=0.75),
                F.likelihood_family("svm_hinge"),
                F.likelihood_family("logistic"),
                F.likelihood_family("hyperbolic", alpha=2.0, kappa=0.9)]
        z = np.linspace(-4.0, 4.0, 33)
        for fam in fams:
            pts = z[np.abs(z - fam.mu_z) > 1e-3]
            lhs = (pts - fam.mu_z) * fam.omega(pts)
            rhs = fam.kappa_z + fam.sigma ** 2 * fam.deriv(pts)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_penalty_moment_identity(self):
        fams = [F.penalty_family("ridge", tau=1.3),
                F.penalty_family("lasso", tau=0.6),
                F.penalty_family("hyperbolic", tau=1.2, alpha=1.5, kappa=-0.5),
                F.penalty_family("double_pareto", tau=0.8, a=2.5)]
        b = np.linspace(-3.0, 3.0, 25)
        for fam in fams:
            pts = b[np.abs(b - fam.mu_beta) > 1e-3]
            lhs = (pts - fam.mu_beta) * fam.lam(pts)
            rhs = fam.kappa_beta + fam.tau ** 2 * fam.deriv(pts)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestOracleQuadrature:
    def test_point_mass_returns_inverse(self):
        fam = F.penalty_family("ridge", tau=1.0)
        for b in (0.2, -3.0, 11.0):
            assert F.oracle_moment_quadrature(fam, b) == 1.0

    def test_lasso_against_oracle(self):
        fam = F.penalty_family("lasso", tau=1.0)
        assert F.oracle_moment_quadrature(fam, 0.5) == pytest.approx(2.0, rel=1e-9)

    @pytest.mark.parametrize("alpha,kappa", [(1.0, 0.3), (2.0, 1.0)])
    def test_hyperbolic_penalty_grid(self, alpha, kappa):
        fam = F.penalty_family("hyperbolic", tau=1.4, alpha=alpha, kappa=kappa)
        for b in np.linspace(-3, 3, 13):
            if abs(b) < 0.05:
                continue
            assert fam.lam(b) == pytest.approx(
                F.oracle_moment_quadrature(fam, b), rel=1e-6)

    def test_hyperbolic_likelihood_example(self):
        fam = F.likelihood_family("hyperbolic", alpha=1.0, kappa=0.3)
        assert fam.omega(1.2) == pytest.approx(
            F.oracle_moment_quadrature(fam, 1.2), rel=1e-6)

    def test_check_loss_against_oracle(self):
        fam = F.likelihood_family("check_loss", q=0.8)
        for z in (-2.0, 0.4, 1.7):
            assert fam.omega(z) == pytest.approx(
                F.oracle_moment_quadrature(fam, z), rel=1e-6)

    def test_unsupported_mixing(self):
        with pytest.raises(UnsupportedMixing):
            F.oracle_moment_quadrature(F.likelihood_family("logistic"), 1.0)
        with pytest.raises(UnsupportedMixing):
            F.oracle_moment_quadrature(
                F.penalty_family("double_pareto", tau=1.0, a=2.0), 1.0)


class TestDensities:
    def test_gig_exponential_special_case(self):
        assert F.gig_density(0.0, 1.0, 1.0, 0.0) == pytest.approx(0.5)
        assert F.gig_density(1.0, 1.0, 1.0, 0.0) == pytest.approx(0.5 * math.exp(-0.5))

    def test_gig_negative_argument(self):
        with pytest.raises(DomainError):
            F.gig_density(-0.1, 1.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            F.gig_density(1.0, 1.0, 0.0, 0.0)

    @pytest.mark.parametrize("psi,gamma,delta", [
        (1.0, 1.0, 0.0), (2.5, 0.7, 0.0), (-0.5, 0.0, 1.2),
        (0.5, 1.0, 1.0), (-1.0, 2.0, 0.5)])
    def test_gig_normalization(self, psi, gamma, delta):
        val, _ = si.quad(lambda v: F.gig_density(v, psi, gamma, delta),
                         0, np.inf, limit=300)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_hyperbolic_values(self):
        assert F.hyperbolic_density(0.0, 0.0, 1.0, 0.0) == pytest.approx(0.5)
        assert F.hyperbolic_density(1.0, 0.0, 1.0, 0.5) == pytest.approx(
            0.375 * math.exp(-0.5), rel=1e-12)
        with pytest.raises(DomainError):
            F.hyperbolic_density(0.0, 0.0, 1.0, 1.0)

    def test_hyperbolic_normalization(self):
        val, _ = si.quad(lambda t: F.hyperbolic_density(t, 0.1, 1.0, 0.4), -80, 80)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_hyperbolic_matches_mixture(self):
        for alpha, kappa in [(1.0, 0.0), (1.0, 0.5), (2.0, 1.0)]:
            mix = F.MixingDistribution.gig(
                1.0, math.sqrt(alpha * alpha - kappa * kappa), 0.0)
            for th in np.arange(-3.0, 3.5, 1.0):
                lhs = F.hyperbolic_density(th, 0.0, alpha, kappa)
                rhs = F.mixture_density_quadrature(0.0, kappa, mix, th)
                assert lhs == pytest.approx(rhs, rel=1e-5)

    def test_z_logistic_case(self):
        zs = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(
            F.z_density(zs, 0.0, 1.0, 0.5), expit(zs), atol=1e-12)
        assert F.z_density(0.0, 0.0, 1.0, 0.5) == pytest.approx(0.5)
        assert F.z_density(2.0, 0.0, 1.0, 0.5) == pytest.approx(
            math.exp(2) / (1 + math.exp(2)), rel=1e-12)

    def test_z_symmetric_when_untilted(self):
        zs = np.linspace(0.1, 3.0, 8)
        for alpha in (0.7, 1.0, 2.3):
            left = F.z_density(0.4 - zs, 0.4, alpha, 0.0)
            right = F.z_density(0.4 + zs, 0.4, alpha, 0.0)
            np.testing.assert_allclose(left, right, rtol=1e-12)

    def test_z_proper_normalization(self):
        val, _ = si.quad(lambda t: F.z_density(t, 0.3, 2.0, 0.5), -60, 60)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_z_domain(self):
        with pytest.raises(DomainError):
            F.z_density(0.0, 0.0, 1.0, 0.7)
        with pytest.raises(DomainError):
            F.z_density(0.0, 0.0, -1.0, -1.0)


class TestWeightDominance:
    def test_logistic_weights_dominate_expected_information(self):
        fam = F.likelihood_family("logistic")
        z = np.concatenate([np.linspace(1e-3, 20.0, 400),
                            -np.linspace(1e-3, 20.0, 400)])
        em = fam.omega(z)
        irls = expit(z) * (1.0 - expit(z))
        assert np.all(em > irls)
        assert fam.omega(0.0) == pytest.approx(0.25)


class TestConstructors:
    def test_invariants_enforced(self):
        with pytest.raises(DomainError):
            F.likelihood_family("check_loss", q=1.5)
        with pytest.raises(DomainError):
            F.likelihood_family("logistic", sigma=2.0)
        with pytest.raises(DomainError):
            F.penalty_family("hyperbolic", alpha=0.5, kappa=0.9)
        with pytest.raises(DomainError):
            F.penalty_family("double_pareto", a=-1.0)
        with pytest.raises(DomainError):
            F.penalty_family("lasso", tau=0.0)

    def test_table_constants(self):
        chk = F.likelihood_family("check_loss", q=0.9)
        assert chk.kappa_z == pytest.approx(-0.8)
        assert chk.mu_z == 0.0
        svm = F.likelihood_family("svm_hinge")
        assert (svm.kappa_z, svm.mu_z) == (1.0, 1.0)
        logi = F.likelihood_family("logistic")
        assert (logi.kappa_z, logi.mu_z) == (0.5, 0.0)
        assert logi.mixing.kind == "polya"
        sq = F.likelihood_family("squared_error")
        assert sq.mixing.kind == "point_mass" and sq.mixing.v0 == 1.0

    def test_mixing_means(self):
        assert F.MixingDistribution.gig(1.0, 1.0, 0.0).mean == pytest.approx(2.0)
        assert F.MixingDistribution.point_mass(0.5).mean == 0.5
        assert F.MixingDistribution.polya(1.0, 0.5).mean is None
        # inverse-gamma with shape 1 has no mean
        assert F.MixingDistribution.gig(-1.0, 0.0, 1.0).mean is None
        assert F.MixingDistribution.gig(-2.0, 0.0, 2.0).mean == pytest.approx(2.0)

    def test_size_biased_gig(self):
        mix = F.MixingDistribution.gig(1.0, 1.0, 0.0)
        tilted = mix.size_biased()
        assert tilted.psi == 2.0
        # v * p(v) / E(v) equals the tilted density pointwise
        v = np.linspace(0.01, 20, 50)
        np.testing.assert_allclose(
            v * mix.density(v) / mix.mean, tilted.density(v), rtol=1e-12)
