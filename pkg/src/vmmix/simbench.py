"""Synthetic designs, evaluation metrics, and the benchmark harness.

Three generators mirror the experimental designs used throughout the
benchmark suites: a factor-model design with modest collinearity, a
factor-covariance multivariate-normal design, and the sparse quantile design
whose 90th percentile is an exact linear function of the predictors.  All
generators are deterministic given their seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, ndtri

from . import baselines, engine
from .engine import Dataset, FitConfig, ModelSpec
from .exceptions import DomainError


@dataclass(frozen=True)
class SimDesign:
    """Descriptor for one synthetic problem."""

    kind: str                    # factor | orthogonal | cov_factor | quantile
    n: int = 100
    p: int = 10
    k_factors: int = 0
    q: float = 0.9
    sigma: float = 5.0
    beta_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("factor", "orthogonal", "cov_factor", "quantile"):
            raise DomainError(f"unknown design kind {self.kind!r}")
        if self.n < 1 or self.p < 1:
            raise DomainError("dimensions must be positive")
        if not 0.0 < self.q < 1.0:
            raise DomainError("quantile level must lie in (0, 1)")


def _logistic_labels(rng, X, beta):
    prob = expit(X @ beta)
    return np.where(rng.uniform(size=X.shape[0]) < prob, 1.0, -1.0)


def gen_factor_design(n: int, p: int, k: int, seed: int,
                      beta_scale: float = 1.0):
    """x_i = B f_i + a_i with standard-normal loadings, factors, noise.

    k = 0 degenerates to an iid-normal design.  Returns (Dataset, beta_true)
    with logistic labels drawn through the canonical link.
    """
    if k > p:
        raise DomainError("k_factors cannot exceed p")
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(p, k)) if k else np.zeros((p, 0))
    f = rng.normal(size=(n, k)) if k else np.zeros((n, 0))
    a = rng.normal(size=(n, p))
    X = f @ B.T + a
    beta = beta_scale * rng.normal(size=p)
    y = _logistic_labels(rng, X, beta)
    return Dataset(X=X, y=y, task="classification"), beta


def gen_cov_factor(n: int, p: int, k: int, seed: int,
                   beta_scale: float = 1.0, psi: np.ndarray | None = None):
    """Rows drawn N(0, Sigma) with Sigma = B B' + Psi, Psi diagonal chi^2_1."""
    if k > p:
        raise DomainError("k_factors cannot exceed p")
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(p, k))
    psi_diag = rng.chisquare(1.0, size=p) if psi is None else np.asarray(psi)
    sigma_mat = B @ B.T + np.diag(psi_diag)
    L = np.linalg.cholesky(sigma_mat)
    X = rng.normal(size=(n, p)) @ L.T
    beta = beta_scale * rng.normal(size=p)
    y = _logistic_labels(rng, X, beta)
    return Dataset(X=X, y=y, task="classification"), beta


QUANTILE_BETA = np.array([5.0, 4.0, 3.0, 2.0, 1.0] + [0.0] * 20)


def gen_quantile_sim(seed: int, n: int = 50, p: int = 25, q: float = 0.9,
                     sigma: float = 5.0):
    """Sparse quantile design: the q-th percentile of y equals x' beta.

    Errors are sigma * (u - z_q) with u standard normal, so their q-th
    percentile is exactly zero.  Returns (train, test, beta_true) with the
    test set drawn from the same model under a distinct sub-stream.
    """
    beta = QUANTILE_BETA[:p].copy() if p <= 25 else np.concatenate(
        [QUANTILE_BETA, np.zeros(p - 25)])
    shift = ndtri(q)

    def one(sub):
        rng = np.random.default_rng((seed, sub))
        X = rng.normal(size=(n, p))
        eps = sigma * (rng.normal(size=n) - shift)
        return Dataset(X=X, y=X @ beta + eps, task="regression")

    return one(0), one(1), beta


def metrics(beta_hat, beta_true, test: Dataset, q: float):
    """(estimation error, out-of-sample check loss, model size).

    est_error = ||beta_hat - beta_true||^2; check loss uses
    rho_q(t) = |t|/2 + (q - 1/2) t; model size counts exact nonzeros.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    err = float(np.sum((beta_hat - beta_true) ** 2))
    t = test.y - test.X @ beta_hat
    oos = float(np.sum(np.abs(t) / 2.0 + (q - 0.5) * t))
    size = int(np.sum(beta_hat != 0.0))
    return err, oos, size


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

ALGORITHMS = ("em", "em-accel", "irls", "irls-pen", "bfgs", "cg")


@dataclass
class BenchRow:
    problem: str
    algorithm: str
    start: str
    status: str
    iterations: int
    wall_time: float
    final_objective: float
    max_grad: float

    def as_dict(self):
        return {
            "problem": self.problem, "algorithm": self.algorithm,
            "start": self.start, "status": self.status,
            "iterations": self.iterations, "wall_time": self.wall_time,
            "final_objective": self.final_objective, "max_grad": self.max_grad,
        }


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def as_dicts(self):
        return [r.as_dict() for r in self.rows]

    def by(self, **filters):
        out = []
        for r in self.rows:
            if all(getattr(r, k) == v for k, v in filters.items()):
                out.append(r)
        return out


@dataclass
class BenchProblem:
    name: str
    spec: ModelSpec
    data: Dataset
    beta_true: np.ndarray


def _objective_and_grad_norm(spec, data, beta):
    obj = engine.objective(spec, data, beta)
    try:
        grad = engine.objective_grad(spec, data, beta)
        return obj, float(np.max(np.abs(grad)))
    except Exception:
        return obj, float("nan")


def run_cell(problem: BenchProblem, algorithm: str, beta0: np.ndarray,
             start_label: str, config: FitConfig) -> BenchRow:
    """Run one (problem, algorithm, start) cell; divergence never aborts."""
    from .accel import fit_em_accel

    spec, data = problem.spec, problem.data
    t0 = time.perf_counter()
    if algorithm in ("em", "em-accel"):
        runner = fit_em_accel if algorithm == "em-accel" else engine.fit_em
        st = runner(spec, data, config, beta0.copy())
        beta, status, iters = st.beta, st.status, st.iterations
    elif algorithm == "irls":
        res = baselines.irls_logistic(data, config, beta0.copy())
        beta, status, iters = res.beta, res.status, res.iterations
    elif algorithm == "irls-pen":
        res = baselines.irls_penalized(spec, data, config, beta0.copy())
        beta, status, iters = res.beta, res.status, res.iterations
    elif algorithm in ("bfgs", "cg"):
        fg = baselines.objective_interface(spec, data)
        run = baselines.bfgs_minimize if algorithm == "bfgs" \
            else baselines.nonlinear_cg_minimize
        res = run(fg, beta0.copy(), config)
        beta, status, iters = res.beta, res.status, res.iterations
    else:
        raise DomainError(f"unknown algorithm {algorithm!r}")
    wall = time.perf_counter() - t0
    if np.all(np.isfinite(beta)):
        obj, gnorm = _objective_and_grad_norm(spec, data, beta)
    else:
        obj, gnorm = float("inf"), float("nan")
    return BenchRow(problem=problem.name, algorithm=algorithm,
                    start=start_label, status=status, iterations=iters,
                    wall_time=wall, final_objective=obj, max_grad=gnorm)


def bench_run(problems, algorithms, starts=("fixed_1e-3", "random_cube"),
              config: FitConfig | None = None, seed: int = 0) -> BenchReport:
    """Every (problem x algorithm x start) cell, shared random start per problem."""
    config = config or FitConfig()
    report = BenchReport()
    rng = np.random.default_rng(seed)
    for problem in problems:
        p = problem.data.p + (1 if problem.spec.intercept else 0)
        start_vectors = {}
        for start in starts:
            if start == "fixed_1e-3":
                start_vectors[start] = np.full(p, 1e-3)
            elif start == "random_cube":
                start_vectors[start] = rng.uniform(-1.0, 1.0, size=p)
            else:
                raise DomainError(f"unknown start type {start!r}")
        for algorithm in algorithms:
            for start, beta0 in start_vectors.items():
                report.rows.append(
                    run_cell(problem, algorithm, beta0, start, config))
    return report


# ---------------------------------------------------------------------------
# Named suites (the desk-scale replications of the timing/robustness studies)
# ---------------------------------------------------------------------------

def _unpenalized_logistic():
    from .families import likelihood_family, penalty_family
    return ModelSpec(likelihood_family("logistic"), penalty_family("none"))


def suite_logistic_small(seed: int = 0, config: FitConfig | None = None):
    """Factor-design logistic MLE race: every algorithm, both start types."""
    config = config or FitConfig(max_iter=20000)
    data, beta = gen_factor_design(2000, 20, 4, seed=seed, beta_scale=0.5)
    problem = BenchProblem("factor-p20-n2000", _unpenalized_logistic(),
                           data, beta)
    report = bench_run([problem], ALGORITHMS, config=config, seed=seed)
    return {"suite": "logistic-small", "seed": seed,
            "report": report, "problem": problem}


def suite_logistic_large(seed: int = 0, n_starts: int = 10,
                         config: FitConfig | None = None):
    """Robustness study: EM variants from many random starts, and IRLS on a
    near-separable variant of the same design."""
    config = config or FitConfig(max_iter=20000)
    data, beta = gen_factor_design(5000, 50, 10, seed=seed, beta_scale=0.35)
    base = BenchProblem("factor-p50-n5000", _unpenalized_logistic(), data, beta)
    sep_data, sep_beta = gen_factor_design(5000, 50, 10, seed=seed + 1,
                                           beta_scale=2.0)
    hard = BenchProblem("near-separable-p50-n5000", _unpenalized_logistic(),
                        sep_data, sep_beta)
    report = BenchReport()
    rng = np.random.default_rng(seed)
    p = data.p
    for s in range(n_starts):
        beta0 = rng.uniform(-1.0, 1.0, size=p)
        label = f"random_cube_{s}"
        for algorithm in ("em", "em-accel"):
            report.rows.append(run_cell(base, algorithm, beta0, label, config))
        report.rows.append(run_cell(hard, "irls", beta0, label, config))
    return {"suite": "logistic-large", "seed": seed,
            "report": report, "problems": [base, hard]}


def suite_path_dpareto(seed: int = 0, num_grid: int = 50,
                       config: FitConfig | None = None):
    """Double-Pareto logistic path race between EM and penalized IRLS."""
    from .families import likelihood_family, penalty_family
    from .path import PathGrid, path_fit

    config = config or FitConfig(max_iter=20000)
    data, beta = gen_cov_factor(200, 50, 4, seed=seed)
    spec = ModelSpec(likelihood_family("logistic"),
                     penalty_family("double_pareto", tau=1.0, a=2.0))
    grid = PathGrid.log_spaced(1e-3, 1e3, num_grid)
    em_path = path_fit(spec, data, grid, config, algo="em-accel")
    irls_path = path_fit(spec, data, grid, config, algo="irls-pen")
    comparison = []
    for em_pt, ir_pt in zip(em_path.points, irls_path.points):
        both = em_pt.status == "converged" and ir_pt.status == "converged"
        comparison.append({
            "tau": em_pt.tau, "log_inv_tau": float(-np.log(em_pt.tau)),
            "em_status": em_pt.status, "irls_status": ir_pt.status,
            "em_objective": em_pt.objective,
            "irls_objective": ir_pt.objective,
            "em_n_active": em_pt.n_active, "irls_n_active": ir_pt.n_active,
            "em_not_worse": bool(em_pt.objective <= ir_pt.objective + 1e-8)
            if both else None,
        })
    return {"suite": "path-dpareto", "seed": seed, "spec": spec, "data": data,
            "em_path": em_path, "irls_path": irls_path,
            "comparison": comparison}


def _quantile_replicate(args):
    """One replicate of the quantile study; module-level for pickling."""
    from dataclasses import replace

    from .families import likelihood_family, penalty_family
    from .path import PathGrid, cv_select_tau

    seed, r, q, folds, config = args
    grid = PathGrid.log_spaced(1e-2, 1e2, 25)
    train, test, beta_true = gen_quantile_sim(seed=seed * 100003 + r)
    lik = likelihood_family("check_loss", q=q)

    fits = {}
    spec_free = ModelSpec(lik, penalty_family("none"))
    fits["unpenalized"] = engine.fit(spec_free, train, config)

    for name, pen in (("lasso", penalty_family("lasso")),
                      ("double_pareto", penalty_family("double_pareto", a=3.0))):
        spec = ModelSpec(lik, pen)
        cv = cv_select_tau(spec, train, grid, folds=folds, config=config,
                           loss="check", q=q, seed=seed * 7 + r)
        spec_star = replace(spec, penalty=pen.with_tau(cv.tau_star))
        fits[name] = engine.fit(spec_star, train, config)
        fits[name].diagnostics["tau_star"] = cv.tau_star

    rows = []
    for name, st in fits.items():
        err, oos, size = metrics(st.beta, beta_true, test, q=q)
        rows.append({"replicate": r, "method": name, "est_error": err,
                     "oos_check_loss": oos, "model_size": size,
                     "status": st.status,
                     "tau_star": st.diagnostics.get("tau_star", None)})
    return rows


def suite_quantile_table3(seed: int = 0, n_replicates: int = 50,
                          q: float = 0.9, folds: int = 5,
                          config: FitConfig | None = None,
                          workers: int = 1):
    """Replicated sparse quantile study: unpenalized vs lasso vs double-Pareto.

    The penalty scale is chosen per replicate by cross-validated check loss
    at the target quantile; the double-Pareto shape is 3.  Replicates are
    independent, so they may run on a worker pool; results are assembled in
    replicate order either way.
    """
    config = config or FitConfig()
    jobs = [(seed, r, q, folds, config) for r in range(n_replicates)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_quantile_replicate, jobs))
    else:
        chunks = [_quantile_replicate(job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]

    summary = {}
    for name in ("unpenalized", "lasso", "double_pareto"):
        sub = [row for row in rows if row["method"] == name]
        for key in ("est_error", "oos_check_loss", "model_size"):
            vals = np.array([row[key] for row in sub], dtype=float)
            summary[f"{name}.{key}.mean"] = float(vals.mean())
            summary[f"{name}.{key}.se"] = float(vals.std(ddof=1)
                                                / np.sqrt(len(vals)))
    return {"suite": "quantile-table3", "seed": seed, "q": q,
            "rows": rows, "summary": summary,
            "n_replicates": n_replicates}


SUITES = {
    "logistic-small": suite_logistic_small,
    "logistic-large": suite_logistic_large,
    "path-dpareto": suite_path_dpareto,
    "quantile-table3": suite_quantile_table3,
}

