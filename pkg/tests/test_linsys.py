"""Tests for the M-step linear algebra."""

import numpy as np
import pytest
from scipy import optimize

from vmmix.exceptions import DimensionMismatch, SingularSystem
from vmmix.linsys import SpdSystem, assemble_mstep, solve_spd


class TestSolveSpd:
    def test_identity(self):
        x = solve_spd(SpdSystem(np.eye(3), np.array([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(x, [1.0, 2.0, 3.0])

    def test_diagonal(self):
        x = solve_spd(SpdSystem(np.diag([2.0, 4.0]), np.array([2.0, 4.0])))
        np.testing.assert_allclose(x, [1.0, 1.0])

    def test_random_spd_residual(self):
        rng = np.random.default_rng(3)
        M = rng.normal(size=(10, 10))
        A = M.T @ M + np.eye(10)
        rhs = rng.normal(size=10)
        x = solve_spd(SpdSystem(A, rhs))
        res = np.max(np.abs(A @ x - rhs))
        assert res <= 1e-8 * (1.0 + np.max(np.abs(rhs)))

    def test_jitter_rescues_semidefinite(self):
        # rank-1 PSD plus tiny negative round-off perturbation
        v = np.array([1.0, 1.0])
        A = np.outer(v, v) + 1e-9 * np.eye(2)
        rhs = A @ np.array([0.5, 0.5])
        x = solve_spd(SpdSystem(A, rhs))
        assert np.max(np.abs(A @ x - rhs)) <= 1e-8 * (1.0 + np.max(np.abs(rhs)))

    def test_hard_singular_raises(self):
        A = np.zeros((2, 2))
        with pytest.raises(SingularSystem):
            solve_spd(SpdSystem(A, np.array([1.0, 0.0])))

    def test_indefinite_exhausts_ladder(self):
        A = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(SingularSystem):
            solve_spd(SpdSystem(A, np.array([1.0, 1.0])))

    def test_strict_mode_flags_ill_conditioning(self):
        A = np.diag([1.0, 1e-16])
        sys_ = SpdSystem(A, np.array([1.0, 1.0]))
        with pytest.raises(SingularSystem) as err:
            solve_spd(sys_, min_rcond=1e-14)
        assert err.value.rcond is not None
        # permissive mode solves it fine
        x = solve_spd(sys_)
        np.testing.assert_allclose(x, [1.0, 1e16])

    def test_non_finite_raises(self):
        A = np.eye(2)
        A[0, 0] = np.nan
        with pytest.raises(SingularSystem):
            solve_spd(SpdSystem(np.eye(2), np.array([np.inf, 0.0])))
        with pytest.raises(DimensionMismatch):
            SpdSystem(np.eye(3), np.zeros(2))

    def test_asymmetric_rejected(self):
        A = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(DimensionMismatch):
            SpdSystem(A, np.zeros(2))


def complete_data_neglogpost(beta, X, y, omega, lam, sigma, tau,
                             mu_z, kappa_z, mu_beta, kappa_beta, mode):
    """Quadratic complete-data objective used as an independent oracle."""
    if mode == "regression":
        z = y - X @ beta
    else:
        z = X @ beta
    t1 = 0.5 / sigma**2 * np.sum(omega * (z - mu_z - kappa_z / omega) ** 2)
    t2 = 0.5 / tau**2 * np.sum(lam * (beta - mu_beta - kappa_beta / lam) ** 2)
    return t1 + t2


class TestAssemble:
    def test_regression_identity_toy(self):
        sys_ = assemble_mstep(np.eye(1), np.ones(1), np.ones(1),
                              sigma=1.0, tau=1.0, mu_z=0.0, kappa_z=0.0,
                              mu_beta=0.0, kappa_beta=0.0,
                              mode="regression", y=np.array([1.0]))
        assert sys_.A[0, 0] == pytest.approx(2.0)
        assert sys_.rhs[0] == pytest.approx(1.0)
        assert solve_spd(sys_)[0] == pytest.approx(0.5)

    def test_classification_single_obs(self):
        # logistic single observation: A = 1.25, rhs = 0.5, beta = 0.4
        sys_ = assemble_mstep(np.array([[1.0]]), np.array([0.25]), np.ones(1),
                              sigma=1.0, tau=1.0, mu_z=0.0, kappa_z=0.5,
                              mu_beta=0.0, kappa_beta=0.0, mode="classification")
        assert sys_.A[0, 0] == pytest.approx(1.25)
        assert sys_.rhs[0] == pytest.approx(0.5)
        assert solve_spd(sys_)[0] == pytest.approx(0.4)

    @pytest.mark.parametrize("mode", ["regression", "classification"])
    def test_matches_direct_maximization(self, mode):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(3, 2))
        y = rng.normal(size=3)
        omega = rng.uniform(0.2, 2.0, size=3)
        lam = rng.uniform(0.2, 2.0, size=2)
        args = dict(sigma=1.3, tau=0.7, mu_z=0.2, kappa_z=-0.4,
                    mu_beta=0.1, kappa_beta=0.3)
        sys_ = assemble_mstep(X, omega, lam, mode=mode,
                              y=y if mode == "regression" else None, **args)
        beta_hat = solve_spd(sys_)

        oracle = optimize.minimize(
            complete_data_neglogpost, np.zeros(2),
            args=(X, y, omega, lam, args["sigma"], args["tau"], args["mu_z"],
                  args["kappa_z"], args["mu_beta"], args["kappa_beta"], mode),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 5000})
        np.testing.assert_allclose(beta_hat, oracle.x, atol=1e-6)

    def test_sigma_one_recovers_printed_form(self):
        """At sigma = 1 the assembled system is exactly the printed M-step."""
        rng = np.random.default_rng(9)
        X = rng.normal(size=(6, 3))
        y = rng.normal(size=6)
        omega = rng.uniform(0.5, 1.5, size=6)
        lam = rng.uniform(0.5, 1.5, size=3)
        tau, mu_z, kappa_z, mu_b, kap_b = 0.9, 0.3, -0.2, 0.0, 0.1
        sys_ = assemble_mstep(X, omega, lam, sigma=1.0, tau=tau, mu_z=mu_z,
                              kappa_z=kappa_z, mu_beta=mu_b, kappa_beta=kap_b,
                              mode="regression", y=y)
        A_ref = X.T @ np.diag(omega) @ X + np.diag(lam) / tau**2
        rhs_ref = X.T @ (np.diag(omega) @ y - mu_z * omega - kappa_z * np.ones(6)) \
            + (mu_b * lam + kap_b * np.ones(3)) / tau**2
        np.testing.assert_allclose(sys_.A, 0.5 * (A_ref + A_ref.T), atol=1e-14)
        np.testing.assert_allclose(sys_.rhs, rhs_ref, atol=1e-14)

    def test_unpenalized_mask(self):
        X = np.eye(2)
        sys_ = assemble_mstep(X, np.ones(2), np.ones(2), sigma=1.0, tau=1.0,
                              mu_z=0.0, kappa_z=0.0, mu_beta=0.0,
                              kappa_beta=0.5, mode="regression",
                              y=np.array([1.0, 1.0]),
                              penalized=np.array([False, True]))
        # first coordinate has no prior precision and no kappa_beta term
        assert sys_.A[0, 0] == pytest.approx(1.0)
        assert sys_.A[1, 1] == pytest.approx(2.0)
        assert sys_.rhs[0] == pytest.approx(1.0)
        assert sys_.rhs[1] == pytest.approx(1.5)

    def test_per_observation_offsets(self):
        # vector mu_z / kappa_z, as used by the multinomial block update
        X = np.array([[1.0], [2.0]])
        omega = np.array([0.5, 0.25])
        mu = np.array([0.2, -0.1])
        kap = np.array([0.5, -0.5])
        sys_ = assemble_mstep(X, omega, np.ones(1), sigma=1.0, tau=1.0,
                              mu_z=mu, kappa_z=kap, mu_beta=0.0,
                              kappa_beta=0.0, mode="classification")
        rhs_ref = X[:, 0] @ (mu * omega + kap)
        assert sys_.rhs[0] == pytest.approx(rhs_ref)

    def test_dimension_checks(self):
        with pytest.raises(DimensionMismatch):
            assemble_mstep(np.eye(2), np.ones(3), np.ones(2), sigma=1.0,
                           tau=1.0, mu_z=0.0, kappa_z=0.0, mu_beta=0.0,
                           kappa_beta=0.0, mode="classification")
        with pytest.raises(DimensionMismatch):
            assemble_mstep(np.eye(2), np.ones(2), np.ones(2), sigma=1.0,
                           tau=1.0, mu_z=0.0, kappa_z=0.0, mu_beta=0.0,
                           kappa_beta=0.0, mode="regression")  # missing y
