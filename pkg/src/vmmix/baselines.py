"""Competing optimizers: IRLS, penalized IRLS, BFGS, nonlinear CG.

These run head-to-head against the EM engine in the benchmark harness.  All
four are implemented here rather than wrapped from a library so that the
comparisons are self-contained; the IRLS variants deliberately omit any
trust-region safeguard, since reproducing their divergence on badly
initialized or near-separable problems is part of the point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import engine
from .exceptions import SingularSystem
from .linsys import SpdSystem, solve_spd

STATUS_CONVERGED = "converged"
STATUS_DIVERGED = "diverged"
STATUS_SINGULAR = "singular"
STATUS_MAX_ITER = "max_iter"

DIVERGENCE_PATIENCE = 5      # consecutive objective increases before giving up
IRLS_RCOND_FLOOR = 1e-14     # "numerically singular" threshold for baselines
LQA_FLOOR = 1e-8             # local-quadratic floor for |beta| in penalized IRLS


@dataclass
class BaselineResult:
    beta: np.ndarray
    iterations: int
    wall_time: float
    status: str
    objective: float
    max_grad: float = float("nan")

    @property
    def converged(self):
        return self.status == STATUS_CONVERGED


def _logistic_nll(X, y01, beta):
    margins = X @ beta
    return float(np.sum(np.logaddexp(0.0, margins) - y01 * margins))


def irls_logistic(data, config=None, beta0=None) -> BaselineResult:
    """Classic IRLS for the logistic MLE with expected-information weights.

    Weights are mu_i (1 - mu_i); divergence is declared after five
    consecutive objective increases or a non-finite iterate, and a solver
    failure is reported as singular.  No trust region on purpose.
    """
    config = config or engine.FitConfig()
    t0 = time.perf_counter()
    X = data.X
    y01 = (np.asarray(data.y) + 1.0) / 2.0
    n, p = X.shape
    beta = np.full(p, 1e-3) if beta0 is None else np.asarray(beta0, float).copy()

    obj = _logistic_nll(X, y01, beta)
    rises = 0
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, config.max_iter + 1):
        mu = expit(X @ beta)
        grad = X.T @ (mu - y01)
        if np.max(np.abs(grad)) < config.tol_grad:
            status = STATUS_CONVERGED
            break
        w = mu * (1.0 - mu)
        A = X.T @ (X * w[:, None])
        rhs = A @ beta - grad
        try:
            beta_new = solve_spd(SpdSystem(A, rhs), min_rcond=IRLS_RCOND_FLOOR)
        except SingularSystem:
            status = STATUS_SINGULAR
            break
        if not np.all(np.isfinite(beta_new)):
            status = STATUS_DIVERGED
            break
        obj_new = _logistic_nll(X, y01, beta_new)
        if not np.isfinite(obj_new):
            status = STATUS_DIVERGED
            break
        rises = rises + 1 if obj_new > obj else 0
        if rises >= DIVERGENCE_PATIENCE:
            status = STATUS_DIVERGED
            break
        beta, obj = beta_new, obj_new

    mu = expit(X @ beta)
    grad = X.T @ (mu - y01)
    return BaselineResult(beta=beta, iterations=it,
                          wall_time=time.perf_counter() - t0, status=status,
                          objective=_logistic_nll(X, y01, beta),
                          max_grad=float(np.max(np.abs(grad))))


def irls_penalized(spec, data, config=None, beta0=None) -> BaselineResult:
    """IRLS with a local-quadratic penalty term added to each system.

    The penalty contributes diag(g'(|b_j|)/|b_j|) with |b_j| floored at 1e-8;
    for ridge this is exactly 1/tau^2.  A numerically singular system is the
    reported failure mode, not something to be patched over.
    """
    config = config or engine.FitConfig()
    t0 = time.perf_counter()
    pen = spec.penalty
    X = data.X
    if spec.intercept:
        X = np.column_stack([np.ones(data.n), X])
    penalized = np.ones(X.shape[1], dtype=bool)
    if spec.intercept:
        penalized[0] = False
    y01 = (np.asarray(data.y) + 1.0) / 2.0
    n, p = X.shape
    beta = np.full(p, 1e-3) if beta0 is None else np.asarray(beta0, float).copy()

    def pen_objective(b):
        val = _logistic_nll(X, y01, b)
        if pen.kind != "none":
            val += float(np.sum(pen.value(b[penalized])))
        return val

    def lqa_diag(b):
        if pen.kind == "none":
            return np.zeros(p)
        if pen.kind == "ridge":
            d = np.full(p, 1.0 / (pen.tau * pen.tau))
        else:
            u = np.maximum(np.abs(b - pen.mu_beta), LQA_FLOOR)
            d = pen.deriv(pen.mu_beta + u) / u
        return np.where(penalized, d, 0.0)

    obj = pen_objective(beta)
    rises = 0
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, config.max_iter + 1):
        mu = expit(X @ beta)
        w = mu * (1.0 - mu)
        D = lqa_diag(beta)
        A = X.T @ (X * w[:, None])
        A[np.diag_indices(p)] += D
        rhs = X.T @ ((w * (X @ beta)) - (mu - y01)) + D * pen.mu_beta
        try:
            beta_new = solve_spd(SpdSystem(0.5 * (A + A.T), rhs),
                                 min_rcond=IRLS_RCOND_FLOOR)
        except SingularSystem:
            status = STATUS_SINGULAR
            break
        if not np.all(np.isfinite(beta_new)):
            status = STATUS_DIVERGED
            break
        obj_new = pen_objective(beta_new)
        if not np.isfinite(obj_new):
            status = STATUS_DIVERGED
            break
        if np.max(np.abs(beta_new - beta)) < config.tol_grad * (1 + np.max(np.abs(beta))):
            beta, obj = beta_new, obj_new
            status = STATUS_CONVERGED
            break
        rises = rises + 1 if obj_new > obj else 0
        if rises >= DIVERGENCE_PATIENCE:
            status = STATUS_DIVERGED
            break
        beta, obj = beta_new, obj_new

    return BaselineResult(beta=beta, iterations=it,
                          wall_time=time.perf_counter() - t0, status=status,
                          objective=pen_objective(beta))


# ---------------------------------------------------------------------------
# Smooth general-purpose optimizers
# ---------------------------------------------------------------------------

def _strong_wolfe(fg, x, f0, g0, d, c1=1e-4, c2=0.9, alpha0=1.0,
                  max_bracket=30):
    """Strong-Wolfe line search (bracket + zoom with quadratic interpolation).

    Returns (alpha, f_new, g_new, evals) or None on failure.
    """
    phi0 = f0
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        return None

    def phi(alpha):
        f, g = fg(x + alpha * d)
        return f, g, float(g @ d)

    alpha_prev, phi_prev, dphi_prev = 0.0, phi0, dphi0
    alpha = alpha0
    evals = 0
    hist = None
    for i in range(max_bracket):
        f_a, g_a, dphi_a = phi(alpha)
        evals += 1
        if (f_a > phi0 + c1 * alpha * dphi0) or (i > 0 and f_a >= phi_prev):
            hist = (alpha_prev, phi_prev, dphi_prev, alpha, f_a, dphi_a)
            break
        if abs(dphi_a) <= -c2 * dphi0:
            return alpha, f_a, g_a, evals
        if dphi_a >= 0:
            hist = (alpha, f_a, dphi_a, alpha_prev, phi_prev, dphi_prev)
            break
        alpha_prev, phi_prev, dphi_prev = alpha, f_a, dphi_a
        alpha *= 2.0
    if hist is None:
        return None

    lo, f_lo, dphi_lo, hi, f_hi, dphi_hi = hist
    for _ in range(40):
        # quadratic interpolation on the lo endpoint, safeguarded bisection
        denom = 2.0 * (f_hi - f_lo - dphi_lo * (hi - lo))
        if denom != 0:
            a_trial = lo - dphi_lo * (hi - lo) ** 2 / denom
        else:
            a_trial = 0.5 * (lo + hi)
        span = abs(hi - lo)
        if not np.isfinite(a_trial) or \
                not (min(lo, hi) + 0.05 * span <= a_trial <= max(lo, hi) - 0.05 * span):
            a_trial = 0.5 * (lo + hi)
        f_t, g_t, dphi_t = phi(a_trial)
        evals += 1
        if (f_t > phi0 + c1 * a_trial * dphi0) or (f_t >= f_lo):
            hi, f_hi, dphi_hi = a_trial, f_t, dphi_t
        else:
            if abs(dphi_t) <= -c2 * dphi0:
                return a_trial, f_t, g_t, evals
            if dphi_t * (hi - lo) >= 0:
                hi, f_hi, dphi_hi = lo, f_lo, dphi_lo
            lo, f_lo, dphi_lo = a_trial, f_t, dphi_t
        if abs(hi - lo) < 1e-16:
            break
    return None


def bfgs_minimize(fg, beta0, config=None) -> BaselineResult:
    """Dense BFGS with strong-Wolfe line search (c1 = 1e-4, c2 = 0.9)."""
    config = config or engine.FitConfig()
    t0 = time.perf_counter()
    x = np.asarray(beta0, dtype=float).copy()
    n = x.size
    H = np.eye(n)  # inverse-Hessian approximation
    f, g = fg(x)
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, config.max_iter + 1):
        if np.max(np.abs(g)) < config.tol_grad:
            status = STATUS_CONVERGED
            break
        d = -(H @ g)
        ls = _strong_wolfe(fg, x, f, g, d, c2=0.9)
        if ls is None and not np.allclose(H, np.eye(n)):
            # stale curvature can spoil the direction; retry from scratch
            H = np.eye(n)
            ls = _strong_wolfe(fg, x, f, g, -g, c2=0.9)
            d = -g
        if ls is None:
            # line-search failure: the iterate is kept; classification below
            status = STATUS_MAX_ITER
            break
        alpha, f_new, g_new, _ = ls
        s = alpha * d
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            if it == 1:
                H = (sy / float(yv @ yv)) * np.eye(n)
            V = np.eye(n) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x + s, f_new, g_new
        if not np.isfinite(f):
            status = STATUS_DIVERGED
            break
    if status == STATUS_MAX_ITER and np.max(np.abs(g)) < config.tol_grad:
        status = STATUS_CONVERGED
    return BaselineResult(beta=x, iterations=it,
                          wall_time=time.perf_counter() - t0, status=status,
                          objective=float(f),
                          max_grad=float(np.max(np.abs(g))))


def nonlinear_cg_minimize(fg, beta0, config=None) -> BaselineResult:
    """Polak-Ribiere (plus) nonlinear conjugate gradient with restarts."""
    config = config or engine.FitConfig()
    t0 = time.perf_counter()
    x = np.asarray(beta0, dtype=float).copy()
    n = x.size
    f, g = fg(x)
    d = -g
    status = STATUS_MAX_ITER
    it = 0
    since_restart = 0
    for it in range(1, config.max_iter + 1):
        if np.max(np.abs(g)) < config.tol_grad:
            status = STATUS_CONVERGED
            break
        if float(g @ d) >= 0:  # lost descent: restart
            d = -g
            since_restart = 0
        # tight curvature constant keeps the search near-exact for conjugacy
        ls = _strong_wolfe(fg, x, f, g, d, c2=0.1, alpha0=1.0)
        if ls is None and since_restart > 0:
            d = -g
            since_restart = 0
            ls = _strong_wolfe(fg, x, f, g, d, c2=0.1, alpha0=1.0)
        if ls is None:
            status = STATUS_MAX_ITER
            break
        alpha, f_new, g_new, _ = ls
        beta_pr = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
        since_restart += 1
        if since_restart >= n:
            beta_pr = 0.0
            since_restart = 0
        x = x + alpha * d
        d = -g_new + beta_pr * d
        f, g = f_new, g_new
        if not np.isfinite(f):
            status = STATUS_DIVERGED
            break
    if status == STATUS_MAX_ITER and np.max(np.abs(g)) < config.tol_grad:
        status = STATUS_CONVERGED
    return BaselineResult(beta=x, iterations=it,
                          wall_time=time.perf_counter() - t0, status=status,
                          objective=float(f),
                          max_grad=float(np.max(np.abs(g))))


def objective_interface(spec, data):
    """(value, gradient) closure over the model objective for BFGS/CG."""
    def fg(beta):
        return (engine.objective(spec, data, beta),
                engine.objective_grad(spec, data, beta))
    return fg
