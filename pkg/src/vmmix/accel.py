"""Quasi-Newton acceleration of the EM map with monotonicity safeguards.

The observed objective splits into the complete-data surrogate minus a
remainder; the surrogate Hessian is exactly the M-step system matrix, and the
remainder Hessian is approximated by symmetric rank-one secant updates built
from consecutive surrogate gradients (the Lange construction: the surrogate
gradient at the expansion point equals the observed gradient, so the
remainder-gradient change is H_C s minus the observed-gradient change).

Each proposal solves (H_C - eta * B) d = grad with eta shrunk geometrically
until the matrix is positive definite and the step strictly decreases the
objective; if eta underflows, the plain EM step is taken, so every iteration
remains monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import engine
from .exceptions import SingularSystem
from .families import MOMENT_CAP

SKIP_RTOL = 1e-8          # SR1 skip rule threshold
SHRINK_FLOOR = 2.0 ** -30
WARMUP_STEPS = 2


@dataclass
class QuasiNewtonState:
    """Secant approximation to the remainder Hessian plus step memory."""

    B: np.ndarray
    prev_beta: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    shrink: float = 1.0
    steps: int = 0
    skips: int = 0
    accepted: int = 0
    fallbacks: int = 0

    @classmethod
    def empty(cls, p: int) -> "QuasiNewtonState":
        return cls(B=np.zeros((p, p)))


def complete_hessian(spec, data, omega, lam) -> np.ndarray:
    """Surrogate (complete-data) Hessian: the M-step system matrix."""
    prob = engine._build_problem(spec, data)
    lam = np.minimum(np.asarray(lam, dtype=float), MOMENT_CAP)
    active = np.ones(prob.p, dtype=bool)
    return prob.assemble(np.asarray(omega, dtype=float), lam, active).A


def rank_one_update(qn: QuasiNewtonState, s: np.ndarray,
                    r: np.ndarray) -> QuasiNewtonState:
    """Symmetric rank-one secant update B <- B + r r' / (r's), with skip rule.

    ``r`` is the secant residual y - B s.  The update is skipped (silently,
    counted) when |r's| < 1e-8 ||r|| ||s||.
    """
    rs = float(r @ s)
    norm = float(np.linalg.norm(r) * np.linalg.norm(s))
    if norm == 0.0 or abs(rs) < SKIP_RTOL * norm:
        qn.skips += 1
        return qn
    qn.B = qn.B + np.outer(r, r) / rs
    return qn


class _QnStepper:
    """Per-fit acceleration driver used inside the EM loop."""

    def __init__(self):
        self.qn: QuasiNewtonState | None = None
        self.signature = None
        self.diag = {"qn_accepted": 0, "qn_fallbacks": 0, "qn_skips": 0}

    def reset(self):
        self.qn = None
        self.signature = None

    def diagnostics(self):
        if self.qn is not None:
            self.diag["qn_skips"] = self.qn.skips
        return dict(self.diag)

    def propose(self, prob, beta, omega, lam, active, objective_fn):
        em_beta = prob.em_step(omega, lam, active, beta)
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            return em_beta

        sig = idx.tobytes()
        if self.qn is None or sig != self.signature:
            self.qn = QuasiNewtonState.empty(idx.size)
            self.signature = sig

        grad = prob.observed_grad(beta, active)
        if grad is None:
            # observed gradient does not exist here; take the safe EM step
            self.diag["qn_fallbacks"] += 1
            self._push_secant(None, None, None)
            return em_beta

        H_c = prob.assemble(omega, lam, active).A
        qn = self.qn
        chosen = em_beta
        if qn.steps >= WARMUP_STEPS and np.any(qn.B):
            obj_here = objective_fn(beta)
            eta = 1.0
            while eta >= SHRINK_FLOOR:
                M = H_c - eta * qn.B
                try:
                    cf = linalg.cho_factor(M, lower=True, check_finite=False)
                except linalg.LinAlgError:
                    eta *= 0.5
                    continue
                step = linalg.cho_solve(cf, grad, check_finite=False)
                cand = beta.copy()
                cand[idx] = beta[idx] - step
                obj_cand = objective_fn(cand)
                if np.isfinite(obj_cand) and obj_cand < obj_here:
                    chosen = cand
                    qn.shrink = eta
                    qn.accepted += 1
                    self.diag["qn_accepted"] += 1
                    break
                eta *= 0.5
            else:
                qn.fallbacks += 1
                self.diag["qn_fallbacks"] += 1

        # secant bookkeeping for the remainder Hessian
        grad_new = prob.observed_grad(chosen, active)
        if grad_new is not None:
            s = chosen[idx] - beta[idx]
            if np.any(s):
                y_r = H_c @ s - (grad_new - grad)
                rank_one_update(qn, s, y_r - qn.B @ s)
        qn.steps += 1
        qn.prev_beta = beta[idx].copy()
        qn.prev_grad = grad
        return chosen

    def _push_secant(self, *_):
        if self.qn is not None:
            self.qn.steps += 1


def accel_step(spec, data, state, qn: QuasiNewtonState,
               config=None):
    """One accelerated step from an existing FitState.

    Returns the updated (state, qn) pair; the proposal is safeguarded so the
    objective never increases.
    """
    config = config or engine.FitConfig()
    prob = engine._build_problem(spec, data)
    beta = state.beta.copy()
    active = state.active.copy()
    z = prob.z(beta)
    omega = prob.omega(z)
    with np.errstate(invalid="ignore"):
        lam = np.minimum(
            np.where(prob.penalized, spec.penalty.lam(beta), 0.0), MOMENT_CAP)

    idx = np.nonzero(active)[0]
    em_beta = prob.em_step(omega, lam, active, beta)
    grad = prob.observed_grad(beta, active)
    chosen = em_beta
    if grad is not None and idx.size and qn.steps >= WARMUP_STEPS \
            and np.any(qn.B):
        H_c = prob.assemble(omega, lam, active).A
        obj_here = prob.objective(beta)
        eta = 1.0
        while eta >= SHRINK_FLOOR:
            M = H_c - eta * qn.B
            try:
                cf = linalg.cho_factor(M, lower=True, check_finite=False)
            except linalg.LinAlgError:
                eta *= 0.5
                continue
            cand = beta.copy()
            cand[idx] = beta[idx] - linalg.cho_solve(cf, grad,
                                                     check_finite=False)
            obj_cand = prob.objective(cand)
            if np.isfinite(obj_cand) and obj_cand < obj_here:
                chosen, qn.shrink = cand, eta
                qn.accepted += 1
                break
            eta *= 0.5
        else:
            qn.fallbacks += 1

    if grad is not None and idx.size:
        grad_new = prob.observed_grad(chosen, active)
        if grad_new is not None:
            s = chosen[idx] - beta[idx]
            if np.any(s):
                H_c = prob.assemble(omega, lam, active).A
                y_r = H_c @ s - (grad_new - grad)
                rank_one_update(qn, s, y_r - qn.B @ s)
    qn.steps += 1

    trace = np.append(state.objective_trace, prob.objective(chosen))
    new_state = engine.FitState(
        beta=chosen, omega=omega, lam=lam, active=active,
        iterations=state.iterations + 1, objective_trace=trace,
        status=state.status, tau=spec.penalty.tau,
        diagnostics=dict(state.diagnostics))
    return new_state, qn


def fit_em_accel(spec, data, config=None, beta0=None,
                 active0=None) -> engine.FitState:
    """EM with quasi-Newton acceleration; same fixed points as plain EM."""
    config = config or engine.FitConfig()
    prob = engine._build_problem(spec, data)
    if beta0 is None:
        beta0 = engine.initial_beta(prob.p)
    return engine._em_loop(prob, config, beta0, active0=active0,
                           stepper=_QnStepper(),
                           tau_cm=config.cm_tau and spec.penalty.kind == "ridge")
