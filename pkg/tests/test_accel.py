"""Tests for quasi-Newton acceleration of the EM map."""

from types import SimpleNamespace

import numpy as np
import pytest

from vmmix import accel as A
from vmmix import engine as E
from vmmix import families as F
from vmmix.accel import QuasiNewtonState, complete_hessian, fit_em_accel, rank_one_update


def make_spec(lik="squared_error", pen="ridge", tau=1.0, **kw):
    lik_kw = {k: kw[k] for k in ("q", "sigma") if k in kw}
    pen_kw = {k: kw[k] for k in ("a", "alpha", "kappa") if k in kw}
    return E.ModelSpec(F.likelihood_family(lik, **lik_kw),
                       F.penalty_family(pen, tau=tau, **pen_kw))


def classification_data(seed=0, n=80, p=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p)
    prob = 1.0 / (1.0 + np.exp(-X @ beta))
    y = np.where(rng.uniform(size=n) < prob, 1.0, -1.0)
    return E.Dataset(X=X, y=y, task="classification")


class TestCompleteHessian:
    def test_equals_mstep_matrix(self):
        data = classification_data()
        spec = make_spec(lik="logistic", pen="ridge", tau=1.3)
        omega = np.full(data.n, 0.25)
        lam = np.ones(3)
        H = complete_hessian(spec, data, omega, lam)
        Xs = data.y[:, None] * data.X
        ref = 0.25 * Xs.T @ Xs + np.eye(3) / 1.3 ** 2
        np.testing.assert_allclose(H, ref, atol=1e-12)

    def test_positive_definite(self):
        data = classification_data(seed=4)
        spec = make_spec(lik="logistic", pen="ridge")
        H = complete_hessian(spec, data, np.full(data.n, 0.2), np.ones(3))
        assert np.min(np.linalg.eigvalsh(H)) > 0

    def test_matches_fd_hessian_of_surrogate(self):
        """The surrogate is quadratic, so FD second differences match exactly."""
        rng = np.random.default_rng(3)
        data = E.Dataset(X=rng.normal(size=(10, 2)), y=rng.normal(size=10))
        spec = make_spec()
        omega = rng.uniform(0.5, 2.0, size=10)
        lam = rng.uniform(0.5, 2.0, size=2)

        def surrogate(beta):
            z = data.y - data.X @ beta
            return 0.5 * np.sum(omega * z * z) + 0.5 * np.sum(lam * beta * beta)

        H = complete_hessian(spec, data, omega, lam)
        h = 1e-4
        for i in range(2):
            for j in range(2):
                ei = np.eye(2)[i] * h
                ej = np.eye(2)[j] * h
                num = (surrogate(ei + ej) - surrogate(ei - ej)
                       - surrogate(-ei + ej) + surrogate(-ei - ej)) / (4 * h * h)
                assert H[i, j] == pytest.approx(num, rel=1e-6, abs=1e-8)


class TestRankOneUpdate:
    def test_skip_when_orthogonal(self):
        qn = QuasiNewtonState.empty(2)
        s = np.array([1.0, 0.0])
        r = np.array([0.0, 1.0])  # r's = 0
        out = rank_one_update(qn, s, r)
        assert out.skips == 1
        np.testing.assert_array_equal(out.B, np.zeros((2, 2)))

    def test_secant_condition_holds(self):
        rng = np.random.default_rng(1)
        Htrue = np.array([[2.0, 0.3], [0.3, 1.0]])
        qn = QuasiNewtonState.empty(2)
        s = rng.normal(size=2)
        y = Htrue @ s
        qn = rank_one_update(qn, s, y - qn.B @ s)
        np.testing.assert_allclose(qn.B @ s, y, atol=1e-10)

    def test_two_updates_recover_2x2_matrix(self):
        Htrue = np.array([[2.0, 0.3], [0.3, 1.0]])
        qn = QuasiNewtonState.empty(2)
        for s in (np.array([1.0, 0.0]), np.array([0.2, 1.0])):
            qn = rank_one_update(qn, s, Htrue @ s - qn.B @ s)
        np.testing.assert_allclose(qn.B, Htrue, atol=1e-10)


class _QuadraticStub:
    """L(b) = 0.5 b'Hb - c'b with a constant surrogate Hessian Hc > H."""

    def __init__(self, H, Hc, c):
        self.H, self.Hc, self.c = H, Hc, c
        self.p = H.shape[0]
        self.penalized = np.ones(self.p, dtype=bool)
        self.pen = SimpleNamespace(mu_beta=0.0)

    def grad(self, b):
        return self.H @ b - self.c

    def objective(self, b):
        return float(0.5 * b @ self.H @ b - self.c @ b)

    def em_step(self, omega, lam, active, beta):
        return beta - np.linalg.solve(self.Hc, self.grad(beta))

    def observed_grad(self, beta, active):
        return self.grad(beta)[active]

    def assemble(self, omega, lam, active):
        return SimpleNamespace(A=self.Hc[np.ix_(active, active)])


class TestStepperOnQuadratic:
    def test_converges_in_two_accelerated_steps(self):
        H = np.array([[1.0, 0.2], [0.2, 0.5]])
        Hc = np.array([[3.0, 0.0], [0.0, 3.0]])  # slow EM map
        c = np.array([1.0, -2.0])
        stub = _QuadraticStub(H, Hc, c)
        stepper = A._QnStepper()
        active = np.ones(2, dtype=bool)
        beta = np.array([5.0, 5.0])
        for _ in range(A.WARMUP_STEPS):
            beta = stepper.propose(stub, beta, None, None, active, stub.objective)
        for k in range(1, 3):
            beta = stepper.propose(stub, beta, None, None, active, stub.objective)
            if np.max(np.abs(stub.grad(beta))) < 1e-8:
                break
        assert np.max(np.abs(stub.grad(beta))) < 1e-8

    def test_zero_b_reproduces_em_step(self):
        H = np.diag([1.0, 0.5])
        Hc = np.diag([2.0, 2.0])
        stub = _QuadraticStub(H, Hc, np.array([1.0, 1.0]))
        stepper = A._QnStepper()
        active = np.ones(2, dtype=bool)
        beta = np.array([3.0, -3.0])
        em = stub.em_step(None, None, active, beta)
        prop = stepper.propose(stub, beta, None, None, active, stub.objective)
        np.testing.assert_allclose(prop, em, atol=1e-14)

    def test_all_rejected_falls_back_to_em(self):
        H = np.diag([1.0, 0.5])
        Hc = np.diag([2.0, 2.0])
        stub = _QuadraticStub(H, Hc, np.array([1.0, 1.0]))
        stepper = A._QnStepper()
        active = np.ones(2, dtype=bool)
        beta = np.array([3.0, -3.0])
        for _ in range(A.WARMUP_STEPS + 1):
            beta = stepper.propose(stub, beta, None, None, active, stub.objective)
        assert np.any(stepper.qn.B)
        em = stub.em_step(None, None, active, beta)

        def rejecting_objective(b):
            if np.allclose(b, beta) or np.allclose(b, em):
                return stub.objective(b)
            return np.inf

        prop = stepper.propose(stub, beta, None, None, active, rejecting_objective)
        np.testing.assert_allclose(prop, em, atol=1e-14)
        assert stepper.diag["qn_fallbacks"] >= 1


class TestFitEmAccel:
    def test_matches_plain_em_on_random_problems(self):
        rng = np.random.default_rng(14)
        cfg = E.FitConfig(tol_grad=1e-9, tol_obj=1e-13)
        for seed in range(20):
            n, p = 40, 4
            local = np.random.default_rng(seed)
            X = local.normal(size=(n, p))
            beta = local.normal(size=p)
            prob = 1.0 / (1.0 + np.exp(-X @ beta))
            y = np.where(local.uniform(size=n) < prob, 1.0, -1.0)
            data = E.Dataset(X=X, y=y, task="classification")
            spec = make_spec(lik="logistic", pen="ridge", tau=1.5)
            st_plain = E.fit_em(spec, data, cfg)
            st_accel = fit_em_accel(spec, data, cfg)
            assert st_plain.converged and st_accel.converged
            assert np.max(np.abs(st_plain.beta - st_accel.beta)) < 1e-5

    def test_monotone_trace(self):
        data = classification_data(seed=8, n=200)
        spec = make_spec(lik="logistic", pen="ridge", tau=2.0)
        st = fit_em_accel(spec, data)
        assert np.all(np.diff(st.objective_trace) <= 1e-10)

    def test_faster_than_plain_em(self):
        data = classification_data(seed=2, n=500)
        spec = make_spec(lik="logistic", pen="none")
        cfg = E.FitConfig(tol_grad=1e-7, tol_obj=1e-14)
        st_plain = E.fit_em(spec, data, cfg)
        st_accel = fit_em_accel(spec, data, cfg)
        assert st_accel.converged
        assert st_accel.iterations <= 0.5 * st_plain.iterations

    def test_fallbacks_still_converge(self):
        # check-loss fits sit near kinks, forcing the EM fallback regularly
        rng = np.random.default_rng(30)
        X = rng.normal(size=(30, 3))
        y = X @ np.array([1.0, 0.0, -1.0]) + rng.normal(size=30)
        data = E.Dataset(X=X, y=y)
        spec = make_spec(lik="check_loss", q=0.5, pen="lasso", tau=1.0)
        st = fit_em_accel(spec, data)
        assert st.converged
        assert np.all(np.diff(st.objective_trace) <= 1e-10)


class TestAccelStepApi:
    def test_single_step_improves(self):
        data = classification_data(seed=5, n=150)
        spec = make_spec(lik="logistic", pen="ridge", tau=1.0)
        st = E.fit_em(spec, data, E.FitConfig(max_iter=3))
        qn = QuasiNewtonState.empty(3)
        st2, qn = A.accel_step(spec, data, st, qn)
        assert st2.objective_trace[-1] <= st.objective_trace[-1] + 1e-12
        assert qn.steps == 1
