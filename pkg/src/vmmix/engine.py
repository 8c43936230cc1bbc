"""The EM engine: moment updates, weighted-ridge solves, sparsity management.

The loop alternates two closed-form half-steps.  The expectation half
replaces the latent scales by their conditional means (families module); the
maximization half solves the penalized weighted least-squares system (linsys
module).  Both halves leave the observed objective non-increasing, which the
fit records in ``objective_trace`` and the tests audit.

Sparsity-inducing penalties drive conditional moments to infinity at the
prior mean.  Moments are clipped at ``families.MOMENT_CAP`` before entering
the solve; coordinates that land within ``prune_eps`` of the prior mean are
pinned there exactly and removed from the active set, and a perturbation scan
at apparent convergence lets wrongly removed coordinates re-enter.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp

from . import families
from .exceptions import (
    CodingError,
    DimensionMismatch,
    KinkError,
    NonFiniteObjective,
    SingularSystem,
    UnsupportedPenalty,
)
from .families import LikelihoodFamily, PenaltyFamily, MOMENT_CAP
from .linsys import SpdSystem, assemble_mstep, solve_spd

STATUS_RUNNING = "running"
STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_FAILED = "failed"

TAU_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Design matrix, response, and task marker.

    Classification responses must be coded as +/-1; multinomial responses as
    integer labels 1..K.
    """

    X: np.ndarray
    y: np.ndarray
    task: str = "regression"
    n_classes: int = 0
    column_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        object.__setattr__(self, "X", X)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionMismatch("X must be a nonempty 2-D array")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch("y length must match the number of rows of X")
        if self.task == "classification":
            y = np.asarray(y, dtype=float)
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise CodingError("classification responses must be coded +/-1")
        elif self.task == "multinomial":
            y = np.asarray(y)
            if self.n_classes < 2:
                raise CodingError("multinomial task requires n_classes >= 2")
            labels = np.arange(1, self.n_classes + 1)
            if not np.all(np.isin(y, labels)):
                raise CodingError("multinomial responses must be labels in 1..K")
            y = y.astype(int)
        elif self.task == "regression":
            y = np.asarray(y, dtype=float)
        else:
            raise CodingError(f"unknown task {self.task!r}")
        object.__setattr__(self, "y", y)
        if self.column_names and len(self.column_names) != X.shape[1]:
            raise DimensionMismatch("column_names length must match X")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """Likelihood + penalty + intercept flag."""

    likelihood: LikelihoodFamily
    penalty: PenaltyFamily
    intercept: bool = False

    def validate_against(self, data: Dataset):
        if self.likelihood.is_classification and data.task == "regression":
            raise CodingError(
                f"{self.likelihood.kind} requires classification data coded +/-1")
        if not self.likelihood.is_classification and data.task == "classification":
            raise CodingError(
                f"{self.likelihood.kind} is a regression loss; task mismatch")


@dataclass
class FitConfig:
    """Tolerances and iteration policy for a single fit."""

    tol_grad: float = 1e-6
    tol_obj: float = 1e-10
    max_iter: int = 5000
    prune_eps: float = 1e-8
    reentry_delta: float = 1e-4
    max_reentry_rounds: int = 3
    accel: bool = True
    restarts: int = 5          # multistart count for non-convex penalties
    cm_tau: bool = False       # conditional-maximization step for ridge tau
    seed: int = 0

    def __post_init__(self):
        for name in ("tol_grad", "tol_obj", "prune_eps", "reentry_delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FitState:
    """Result of one EM run."""

    beta: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    iterations: int
    objective_trace: np.ndarray
    status: str
    reason: str = ""
    tau: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def objective(self):
        return float(self.objective_trace[-1])

    @property
    def converged(self):
        return self.status == STATUS_CONVERGED

    def n_active(self, skip_first: bool = False):
        mask = self.active[1:] if skip_first else self.active
        return int(np.sum(mask))


# ---------------------------------------------------------------------------
# Problem wiring (shared by binary/regression fits and multinomial blocks)
# ---------------------------------------------------------------------------

class _Problem:
    """Design-side plumbing for one EM fit.

    ``X_eff`` is the matrix whose rows multiply beta in the working response
    (X for regression and offset blocks, y_i * x_i for classification).
    ``mu_obs``/``kappa_obs`` are the per-observation mixture constants.
    """

    def __init__(self, lik, pen, X_eff, mode, y=None, offsets=None,
                 targets=None, penalized=None):
        self.lik = lik
        self.pen = pen
        self.X = X_eff
        self.mode = mode                # "regression" | "classification"
        self.y = y
        self.offsets = offsets          # multinomial c_ik, else None
        self.targets = targets          # multinomial a_i in {0,1}, else None
        self.n, self.p = X_eff.shape
        self.penalized = (np.ones(self.p, dtype=bool)
                          if penalized is None else penalized)
        if offsets is None:
            self.mu_obs = lik.mu_z
            self.kappa_obs = lik.kappa_z
        else:
            self.mu_obs = offsets
            self.kappa_obs = targets - 0.5

    # -- responses and moments ---------------------------------------------

    def z(self, beta):
        if self.mode == "regression":
            return self.y - self.X @ beta
        if self.offsets is not None:
            return self.X @ beta - self.offsets
        return self.X @ beta

    def omega(self, z):
        if self.offsets is not None:
            # every multinomial block term is a tilted logistic;
            # the weight formula is the shared tanh form
            small = np.abs(z) < families.EPS_LIMIT
            zsafe = np.where(small, 1.0, z)
            return np.where(small, 0.25, np.tanh(zsafe / 2.0) / (2.0 * zsafe))
        return self.lik.omega(z)

    def floss(self, z):
        if self.offsets is not None:
            return np.logaddexp(0.0, z) - self.targets * z
        return self.lik.value(z)

    def floss_deriv_safe(self, z):
        """f'(z) with subgradient midpoints substituted at kinks."""
        if self.offsets is not None:
            return expit(z) - self.targets
        lik = self.lik
        if lik.kind == "squared_error":
            return z / lik.sigma ** 2
        if lik.kind == "logistic":
            return -expit(-z)
        u = z - lik.mu_z
        s = np.where(np.abs(u) < families.EPS_KINK, 0.0, np.sign(u))
        if lik.kind == "svm_hinge":
            return np.where(np.abs(u) < families.EPS_KINK, -1.0,
                            np.where(z < 1.0, -2.0, 0.0))
        if lik.kind == "check_loss":
            return s + (2.0 * lik.q - 1.0)
        return (lik.slope * s - lik.tilt) / lik.sigma

    def objective(self, beta):
        val = float(np.sum(self.floss(self.z(beta))))
        pen_idx = self.penalized
        if self.pen.kind != "none" and np.any(pen_idx):
            val += float(np.sum(self.pen.value(beta[pen_idx])))
        return val

    def grad_f(self, beta):
        """Data-side gradient, kink-tolerant."""
        fp = self.floss_deriv_safe(self.z(beta))
        if self.mode == "regression":
            return -(self.X.T @ fp)
        return self.X.T @ fp

    def observed_grad(self, beta, active):
        """Gradient of the observed objective on the active set.

        Returns None when the objective is not differentiable at beta (a
        working response or an active coordinate sits on a kink), in which
        case the caller should fall back to the plain EM step.
        """
        z = self.z(beta)
        if self.offsets is None and self.lik.kind not in ("squared_error",
                                                          "logistic"):
            if np.any(np.abs(z - self.lik.mu_z) < families.EPS_KINK):
                return None
        grad = self.grad_f(beta)
        idx = np.nonzero(active)[0]
        pen = self.pen
        if pen.kind != "none":
            for j in idx:
                if not self.penalized[j]:
                    continue
                if pen.sparsity_inducing and \
                        abs(beta[j] - pen.mu_beta) < families.EPS_KINK:
                    return None
                grad[j] += float(pen.deriv(beta[j]))
        return grad[idx]

    def assemble(self, omega, lam, active):
        return assemble_mstep(
            self.X[:, active], omega, lam[active],
            sigma=self.lik.sigma, tau=self.pen.tau,
            mu_z=self.mu_obs, kappa_z=self.kappa_obs,
            mu_beta=self.pen.mu_beta, kappa_beta=self.pen.kappa_beta,
            mode=self.mode, y=self.y if self.mode == "regression" else None,
            penalized=self.penalized[active])

    def em_step(self, omega, lam, active, beta):
        out = np.full(self.p, self.pen.mu_beta)
        out[~self.penalized] = 0.0
        if np.any(active):
            out[active] = solve_spd(self.assemble(omega, lam, active))
        return out

    def kkt_residual(self, beta, active):
        """Max violation of the (sub)gradient optimality conditions."""
        grad_f = self.grad_f(beta)
        worst = 0.0
        interval = self.pen.subgradient_interval()
        for j in range(self.p):
            gf = grad_f[j]
            if not self.penalized[j]:
                worst = max(worst, abs(gf))
                continue
            b = beta[j]
            at_kink = (self.pen.kind != "none"
                       and abs(b - self.pen.mu_beta) < families.EPS_KINK)
            if active[j] and not at_kink:
                worst = max(worst, abs(gf + float(self.pen.deriv(b))))
            elif interval is not None:
                lo, hi = interval
                target = -gf
                worst = max(worst, max(0.0, lo - target, target - hi))
            else:
                worst = max(worst, abs(gf))
        return worst


def _build_problem(spec: ModelSpec, data: Dataset) -> _Problem:
    spec.validate_against(data)
    X = data.X
    if spec.intercept:
        X = np.column_stack([np.ones(data.n), X])
    penalized = np.ones(X.shape[1], dtype=bool)
    if spec.intercept:
        penalized[0] = False
    if spec.likelihood.is_classification:
        X_eff = data.y[:, None] * X
        return _Problem(spec.likelihood, spec.penalty, X_eff,
                        "classification", penalized=penalized)
    return _Problem(spec.likelihood, spec.penalty, X, "regression",
                    y=data.y, penalized=penalized)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def working_response(spec: ModelSpec, data: Dataset, beta: np.ndarray) -> np.ndarray:
    """z = y - X beta for regression, z = y * (X beta) for classification."""
    return _build_problem(spec, data).z(np.asarray(beta, dtype=float))


def e_step(spec: ModelSpec, data: Dataset, state: FitState):
    """Conditional moments at the current beta.

    Returns (omega, lambda); lambda entries are +inf exactly at the prior
    mean, which is the pruning signal.
    """
    prob = _build_problem(spec, data)
    z = prob.z(state.beta)
    omega = prob.omega(z)
    lam = np.where(prob.penalized, spec.penalty.lam(state.beta), 0.0)
    return omega, lam


def m_step(spec: ModelSpec, data: Dataset, omega, lam, active) -> np.ndarray:
    """Solve the assembled system on the active set; pins the rest."""
    prob = _build_problem(spec, data)
    lam = np.minimum(np.asarray(lam, dtype=float), MOMENT_CAP)
    return prob.em_step(np.asarray(omega, dtype=float), lam,
                        np.asarray(active, dtype=bool), None)


def objective(spec: ModelSpec, data: Dataset, beta) -> float:
    """Sum of losses plus sum of penalties (negative log posterior)."""
    return _build_problem(spec, data).objective(np.asarray(beta, dtype=float))


def objective_grad(spec: ModelSpec, data: Dataset, beta, on_kink: str = "raise"):
    """Analytic gradient of the objective.

    ``on_kink="raise"`` raises KinkError listing the offending penalty
    coordinates; ``on_kink="interval"`` returns (lo, hi) arrays whose entries
    bracket the subgradient at kink coordinates and coincide elsewhere.
    """
    beta = np.asarray(beta, dtype=float)
    prob = _build_problem(spec, data)
    pen = spec.penalty
    grad = prob.grad_f(beta)
    if pen.kind == "none" or not np.any(prob.penalized):
        return (grad, grad.copy()) if on_kink == "interval" else grad

    u = beta - pen.mu_beta
    kink = prob.penalized & (np.abs(u) < families.EPS_KINK) \
        & (pen.subgradient_interval() is not None)
    if np.any(kink):
        if on_kink == "raise":
            raise KinkError("objective gradient undefined at penalty kinks",
                            indices=np.nonzero(kink)[0])
        lo_s, hi_s = pen.subgradient_interval()
        lo = grad.copy()
        hi = grad.copy()
        ok = prob.penalized & ~kink
        lo[ok] += pen.deriv(beta[ok])
        hi[ok] = lo[ok]
        lo[kink] += lo_s
        hi[kink] += hi_s
        return lo, hi
    ok = prob.penalized
    grad[ok] += pen.deriv(beta[ok])
    return (grad, grad.copy()) if on_kink == "interval" else grad


def initial_beta(p: int, mode: str = "fixed", seed: int = 0,
                 value: float = 1e-3) -> np.ndarray:
    """Default start 1e-3 * ones, or a seeded draw from [-1, 1]^p."""
    if mode == "fixed":
        return np.full(p, value)
    if mode == "random":
        return np.random.default_rng(seed).uniform(-1.0, 1.0, size=p)
    raise ValueError(f"unknown init mode {mode!r}")


# ---------------------------------------------------------------------------
# The EM loop
# ---------------------------------------------------------------------------

def _em_loop(prob: _Problem, config: FitConfig, beta0: np.ndarray,
             active0=None, stepper=None, tau_cm: bool = False) -> FitState:
    t_start = time.perf_counter()
    p = prob.p
    pen = prob.pen
    sparsity = pen.sparsity_inducing
    beta = np.asarray(beta0, dtype=float).copy()
    if beta.shape != (p,):
        raise DimensionMismatch(f"beta0 shape {beta.shape}, expected ({p},)")

    active = np.ones(p, dtype=bool) if active0 is None \
        else np.asarray(active0, dtype=bool).copy()
    if sparsity:
        # coordinates sitting exactly at the prior mean start inactive
        active &= ~(prob.penalized & (beta == pen.mu_beta))
    beta[prob.penalized & ~active] = pen.mu_beta

    def full_objective(b):
        val = prob.objective(b)
        if tau_cm:
            val += np.count_nonzero(prob.penalized) * math.log(prob.pen.tau)
        return val

    trace = [full_objective(beta)]
    if not np.isfinite(trace[0]):
        return FitState(beta, np.zeros(prob.n), np.zeros(p), active, 0,
                        np.asarray(trace), STATUS_FAILED,
                        reason="non-finite objective at start", tau=pen.tau)

    omega = np.zeros(prob.n)
    lam = np.zeros(p)
    status = STATUS_RUNNING
    reason = ""
    reentry_rounds = 0
    it = 0
    obj = trace[0]

    while it < config.max_iter:
        it += 1
        # E-step
        z = prob.z(beta)
        omega = prob.omega(z)
        with np.errstate(invalid="ignore"):
            lam_raw = np.where(prob.penalized, pen.lam(beta), 0.0)
        lam = np.minimum(lam_raw, MOMENT_CAP)

        # M-step (possibly quasi-Newton accelerated)
        try:
            if stepper is None:
                beta_new = prob.em_step(omega, lam, active, beta)
            else:
                beta_new = stepper.propose(prob, beta, omega, lam, active,
                                           full_objective)
        except SingularSystem as err:
            status, reason = STATUS_FAILED, f"singular system: {err}"
            break

        obj_new = full_objective(beta_new)
        if not np.isfinite(obj_new):
            status, reason = STATUS_FAILED, "non-finite objective"
            break

        # prune coordinates that the moments have pinned, guarding monotonicity
        if sparsity:
            cand = active & prob.penalized \
                & (np.abs(beta_new - pen.mu_beta) < config.prune_eps)
            if np.any(cand):
                slack = 2.5e-11 * (1.0 + abs(obj_new))
                pinned = beta_new.copy()
                pinned[cand] = pen.mu_beta
                obj_pin = full_objective(pinned)
                if obj_pin <= obj_new + slack:
                    beta_new, obj_new = pinned, obj_pin
                    active &= ~cand
                else:
                    for j in np.nonzero(cand)[0]:
                        trial = beta_new.copy()
                        trial[j] = pen.mu_beta
                        obj_try = full_objective(trial)
                        if obj_try <= obj_new + slack:
                            beta_new, obj_new = trial, obj_try
                            active[j] = False

        if tau_cm and pen.kind == "ridge":
            new_tau = _tau_update(prob, beta_new, active)
            prob.pen = pen = pen.with_tau(new_tau)
            obj_new = full_objective(beta_new)

        beta = beta_new
        trace.append(obj_new)
        rel_change = abs(obj - obj_new) / (1.0 + abs(obj_new))
        obj = obj_new

        if rel_change < config.tol_obj or \
                prob.kkt_residual(beta, active) < config.tol_grad:
            if sparsity:
                # consolidate stragglers: geometric shrinkage toward an exact
                # zero stalls the objective criterion before prune_eps is
                # reached, so pin any coordinate whose removal is free
                pinned, beta, obj = _consolidate_zeros(
                    prob, beta, active, obj, full_objective)
                if pinned:
                    trace.append(obj)
                    if stepper is not None:
                        stepper.reset()
                    continue
            if sparsity and reentry_rounds < config.max_reentry_rounds \
                    and np.any(prob.penalized & ~active):
                changed, beta = _reentry(prob, beta, active, config, obj,
                                         full_objective)
                if changed:
                    reentry_rounds += 1
                    if stepper is not None:
                        stepper.reset()
                    continue
            status = STATUS_CONVERGED
            break

    if status == STATUS_RUNNING:
        status = STATUS_MAX_ITER

    diag = {"wall_time": time.perf_counter() - t_start,
            "reentry_rounds": reentry_rounds}
    if stepper is not None:
        diag.update(stepper.diagnostics())
    return FitState(beta=beta, omega=omega, lam=lam, active=active,
                    iterations=it, objective_trace=np.asarray(trace),
                    status=status, reason=reason, tau=pen.tau,
                    diagnostics=diag)


def _consolidate_zeros(prob, beta, active, obj, full_objective):
    """Pin active coordinates whose exact removal does not raise the objective."""
    pen = prob.pen
    cand = np.nonzero(active & prob.penalized)[0]
    if cand.size == 0:
        return False, beta, obj
    order = cand[np.argsort(np.abs(beta[cand] - pen.mu_beta))]
    changed = False
    for j in order:
        slack = 1e-13 * (1.0 + abs(obj))
        trial = beta.copy()
        trial[j] = pen.mu_beta
        obj_try = full_objective(trial)
        if obj_try <= obj + slack:
            beta, obj = trial, obj_try
            active[j] = False
            changed = True
    return changed, beta, obj


def _reentry(prob, beta, active, config, obj, full_objective):
    """Perturb inactive coordinates; re-activate any that improve the fit."""
    changed = False
    threshold = config.tol_obj * (1.0 + abs(obj))
    for j in np.nonzero(prob.penalized & ~active)[0]:
        best_obj, best_val = obj, None
        for s in (+1.0, -1.0):
            trial = beta.copy()
            trial[j] = prob.pen.mu_beta + s * config.reentry_delta
            obj_try = full_objective(trial)
            if obj_try < best_obj - threshold:
                best_obj, best_val = obj_try, trial[j]
        if best_val is not None:
            beta = beta.copy()
            beta[j] = best_val
            active[j] = True
            obj = best_obj
            changed = True
    return changed, beta


def _tau_update(prob, beta, active):
    pen = prob.pen
    idx = prob.penalized
    resid = beta[idx] - pen.mu_beta
    tau2 = float(np.mean(resid * resid))
    return max(math.sqrt(tau2), TAU_FLOOR)


def prune(spec: ModelSpec, data: Dataset, state: FitState,
          config: FitConfig) -> FitState:
    """Pin coordinates within prune_eps of the prior mean and deactivate them."""
    if not spec.penalty.sparsity_inducing:
        return state
    prob = _build_problem(spec, data)
    beta = state.beta.copy()
    active = state.active.copy()
    cand = active & prob.penalized \
        & (np.abs(beta - spec.penalty.mu_beta) < config.prune_eps)
    beta[cand] = spec.penalty.mu_beta
    active &= ~cand
    trace = np.append(state.objective_trace, prob.objective(beta))
    return replace(state, beta=beta, active=active, objective_trace=trace)


def reentry_scan(spec: ModelSpec, data: Dataset, state: FitState,
                 config: FitConfig) -> FitState:
    """One perturbation scan over inactive coordinates at apparent convergence."""
    prob = _build_problem(spec, data)
    active = state.active.copy()
    changed, beta = _reentry(prob, state.beta.copy(), active, config,
                             state.objective, prob.objective)
    if not changed:
        return state
    trace = np.append(state.objective_trace, prob.objective(beta))
    return replace(state, beta=beta, active=active, objective_trace=trace,
                   status=STATUS_RUNNING)


def cm_step_tau(spec: ModelSpec, data: Dataset, state: FitState) -> float:
    """Conditional maximizer of the complete-data posterior in tau (ridge only)."""
    if spec.penalty.kind != "ridge":
        raise UnsupportedPenalty("tau CM-step is implemented for ridge only")
    prob = _build_problem(spec, data)
    return _tau_update(prob, state.beta, state.active)


def fit_em(spec: ModelSpec, data: Dataset, config: FitConfig | None = None,
           beta0=None, active0=None) -> FitState:
    """Plain EM fit.  beta0 defaults to 1e-3 on every coordinate."""
    config = config or FitConfig()
    prob = _build_problem(spec, data)
    if beta0 is None:
        beta0 = initial_beta(prob.p)
    return _em_loop(prob, config, beta0, active0=active0,
                    tau_cm=config.cm_tau and spec.penalty.kind == "ridge")


def fit(spec: ModelSpec, data: Dataset, config: FitConfig | None = None,
        beta0=None, active0=None) -> FitState:
    """Front-door fit: acceleration per config, multistart for non-convex penalties."""
    from .accel import fit_em_accel  # local import to avoid a cycle

    config = config or FitConfig()
    runner = fit_em_accel if config.accel else fit_em
    best = runner(spec, data, config, beta0, active0=active0)
    if spec.penalty.convex or config.restarts <= 1:
        return best
    p = best.beta.shape[0]
    rng = np.random.default_rng(config.seed)
    for k in range(config.restarts - 1):
        start = rng.uniform(-1.0, 1.0, size=p)
        cand = runner(spec, data, config, start)
        if cand.objective < best.objective and cand.status != STATUS_FAILED:
            best = cand
    return best


# ---------------------------------------------------------------------------
# Multinomial blockwise fits
# ---------------------------------------------------------------------------

@dataclass
class MultinomialResult:
    states: list
    joint_trace: np.ndarray
    sweeps: int
    status: str

    @property
    def coefficients(self):
        return np.column_stack([s.beta for s in self.states])


def _block_offsets(X, B, k):
    """c_ik = log sum_{l != k} exp(x_i' beta_l)."""
    scores = X @ B
    masked = np.delete(scores, k, axis=1)
    return logsumexp(masked, axis=1)


def multinomial_objective(specs, data: Dataset, B: np.ndarray) -> float:
    """Joint negative log posterior of the multinomial model."""
    X = data.X
    if specs[0].intercept:
        X = np.column_stack([np.ones(data.n), X])
    scores = X @ B
    nll = float(np.sum(logsumexp(scores, axis=1)
                       - scores[np.arange(data.n), data.y - 1]))
    for k, spec in enumerate(specs):
        start = 1 if spec.intercept else 0
        if spec.penalty.kind != "none":
            nll += float(np.sum(spec.penalty.value(B[start:, k])))
    return nll


def fit_multinomial(specs, data: Dataset, config: FitConfig | None = None,
                    max_sweeps: int = 200) -> MultinomialResult:
    """Cyclic blockwise conditional maximization over the class blocks.

    Each class block is a tilted binary logistic problem with per-observation
    location offsets c_ik; fixing the other blocks, one EM fit updates the
    block, and sweeps repeat until the joint objective stabilizes.
    """
    config = config or FitConfig()
    if data.task != "multinomial":
        raise CodingError("fit_multinomial requires a multinomial dataset")
    K = data.n_classes
    if isinstance(specs, ModelSpec):
        specs = [specs] * K
    if len(specs) != K:
        raise DimensionMismatch(f"need {K} specs, got {len(specs)}")
    for spec in specs:
        if spec.likelihood.kind != "logistic":
            raise CodingError("multinomial blocks require the logistic likelihood")

    X = data.X
    if specs[0].intercept:
        X = np.column_stack([np.ones(data.n), X])
    p = X.shape[1]
    B = np.full((p, K), 1e-3)
    states = [None] * K
    joint = [multinomial_objective(specs, data, B)]
    status = STATUS_MAX_ITER
    # partial inner maximization keeps sweeps cheap; monotonicity holds anyway
    inner = replace(config, max_iter=min(config.max_iter, 200))

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for k in range(K):
            spec = specs[k]
            penalized = np.ones(p, dtype=bool)
            if spec.intercept:
                penalized[0] = False
            prob = _Problem(spec.likelihood, spec.penalty, X, "classification",
                            offsets=_block_offsets(X, B, k),
                            targets=(data.y == k + 1).astype(float),
                            penalized=penalized)
            beta0 = B[:, k].copy()
            if spec.penalty.sparsity_inducing:
                beta0[beta0 == spec.penalty.mu_beta] += 1e-3
            states[k] = _em_loop(prob, inner, beta0)
            if states[k].status == STATUS_FAILED:
                return MultinomialResult(states, np.asarray(joint), sweeps,
                                         STATUS_FAILED)
            B[:, k] = states[k].beta
        joint.append(multinomial_objective(specs, data, B))
        if abs(joint[-2] - joint[-1]) / (1.0 + abs(joint[-1])) < config.tol_obj:
            status = STATUS_CONVERGED
            break

    return MultinomialResult(states, np.asarray(joint), sweeps, status)
