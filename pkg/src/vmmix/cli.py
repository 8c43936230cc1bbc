"""Command-line entry points tying the solver modules together.

Exit codes: 0 on success, 1 on model failure (a report is still written),
2 on usage errors.  Reports are JSON, tables CSV; the path and bench
commands additionally render figures next to the delimited output unless
--no-plots is given.
"""

from __future__ import annotations

import csv
import logging
import os
import sys
from dataclasses import replace

import click
import numpy as np

from . import __version__, engine, report
from .engine import Dataset, FitConfig, ModelSpec
from .exceptions import CodingError, ParseError, VmmixError
from .families import likelihood_family, penalty_family

log = logging.getLogger("vmmix")

LIKELIHOOD_VOCAB = "gauss, laplace, quantile:q, svm, logistic"
PENALTY_VOCAB = "ridge, lasso, hyperbolic:alpha:kappa, dpareto:a, none"


# ---------------------------------------------------------------------------
# Config vocabulary and data ingestion
# ---------------------------------------------------------------------------

def parse_likelihood(text: str, sigma: float = 1.0):
    parts = text.strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "gauss":
            return likelihood_family("squared_error", sigma=sigma)
        if name == "laplace":
            return likelihood_family("absolute_error", sigma=sigma)
        if name == "quantile":
            if len(args) != 1:
                raise click.UsageError(
                    "quantile likelihood needs its level, e.g. quantile:0.9")
            return likelihood_family("check_loss", q=float(args[0]))
        if name == "svm":
            return likelihood_family("svm_hinge")
        if name == "logistic":
            return likelihood_family("logistic")
    except (VmmixError, ValueError) as err:
        raise click.UsageError(f"bad likelihood {text!r}: {err}")
    raise click.UsageError(
        f"unknown likelihood {text!r}; choose from {LIKELIHOOD_VOCAB}")


def parse_penalty(text: str, tau: float = 1.0):
    parts = text.strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "ridge":
            return penalty_family("ridge", tau=tau)
        if name == "lasso":
            return penalty_family("lasso", tau=tau)
        if name == "hyperbolic":
            if len(args) != 2:
                raise click.UsageError(
                    "hyperbolic penalty is hyperbolic:alpha:kappa")
            return penalty_family("hyperbolic", tau=tau,
                                  alpha=float(args[0]), kappa=float(args[1]))
        if name == "dpareto":
            if len(args) != 1:
                raise click.UsageError("double-Pareto penalty is dpareto:a")
            return penalty_family("double_pareto", tau=tau, a=float(args[0]))
        if name == "none":
            return penalty_family("none")
    except (VmmixError, ValueError) as err:
        raise click.UsageError(f"bad penalty {text!r}: {err}")
    raise click.UsageError(
        f"unknown penalty {text!r}; choose from {PENALTY_VOCAB}")


def read_csv(path, response_column: str, task: str = "regression") -> Dataset:
    """Load a UTF-8 headed CSV into a Dataset.

    Classification responses may be coded {0,1}; zeros are mapped to -1 and
    the remap is logged.  Cell-level problems raise ParseError with the
    1-based line and column.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1, column=1)
        header = [h.strip() for h in header]
        if response_column not in header:
            raise ParseError(f"response column {response_column!r} not in header",
                             line=1, column=1)
        y_idx = header.index(response_column)
        x_names = [h for i, h in enumerate(header) if i != y_idx]
        rows = []
        for line_no, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, got {len(raw)}",
                    line=line_no, column=len(raw) + 1)
            vals = []
            for col_no, cell in enumerate(raw, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}",
                                     line=line_no, column=col_no)
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows", line=2, column=1)
    arr = np.asarray(rows, dtype=float)
    y = arr[:, y_idx]
    X = np.delete(arr, y_idx, axis=1)
    if task == "classification":
        uniq = set(np.unique(y))
        if uniq <= {0.0, 1.0}:
            log.info("mapping {0,1} response coding to {-1,+1}")
            y = np.where(y > 0, 1.0, -1.0)
        elif not uniq <= {-1.0, 1.0}:
            raise CodingError(
                f"classification labels must be in {{-1,1}} or {{0,1}}, got {sorted(uniq)}")
    n_classes = 0
    if task == "multinomial":
        n_classes = int(np.max(y))
        y = y.astype(int)
    return Dataset(X=X, y=y, task=task, n_classes=n_classes,
                   column_names=tuple(x_names))


def _config_from_options(seed, max_iter, tol_obj, tol_grad, accel) -> FitConfig:
    return FitConfig(tol_grad=tol_grad, tol_obj=tol_obj, max_iter=max_iter,
                     accel=accel, seed=seed)


def _workers_option(value):
    if value is not None:
        return value
    env = os.environ.get("VMMIX_WORKERS", "")
    return int(env) if env.isdigit() and int(env) > 0 else 1


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(version=__version__)
def main():
    """Variance-mean mixture EM solvers for penalized regression/classification."""
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s",
                        stream=sys.stderr)


common_fit_options = [
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--max-iter", type=int, default=5000, show_default=True),
    click.option("--tol-obj", type=float, default=1e-10, show_default=True),
    click.option("--tol-grad", type=float, default=1e-6, show_default=True),
    click.option("--accel/--no-accel", default=True, show_default=True,
                 help="quasi-Newton acceleration of the EM map"),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@main.command()
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--response", required=True, help="response column name")
@click.option("--task", type=click.Choice(["regression", "classification"]),
              default="regression", show_default=True)
@click.option("--likelihood", required=True,
              help=f"one of: {LIKELIHOOD_VOCAB}")
@click.option("--penalty", default="ridge", show_default=True,
              help=f"one of: {PENALTY_VOCAB}")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--intercept/--no-intercept", default=False, show_default=True)
@click.option("--algo", type=click.Choice(["em", "em-accel", "irls",
                                           "irls-pen", "bfgs", "cg"]),
              default=None, help="defaults to em-accel (or em with --no-accel)")
@click.option("--out", type=click.Path(dir_okay=False), default="fit_report.json",
              show_default=True)
@add_options(common_fit_options)
def fit(data_path, response, task, likelihood, penalty, tau, sigma, intercept,
        algo, out, seed, max_iter, tol_obj, tol_grad, accel):
    """Fit one model and write a JSON report."""
    lik = parse_likelihood(likelihood, sigma=sigma)
    pen = parse_penalty(penalty, tau=tau)
    if lik.kind == "check_loss" and "quantile" not in likelihood:
        raise click.UsageError("check loss requires quantile:q")
    if task == "regression" and lik.is_classification:
        task = "classification"
    try:
        data = read_csv(data_path, response, task)
    except (ParseError, CodingError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    spec = ModelSpec(lik, pen, intercept=intercept)
    config = _config_from_options(seed, max_iter, tol_obj, tol_grad, accel)
    if algo is None:
        algo = "em-accel" if accel else "em"

    from . import baselines
    from .accel import fit_em_accel
    try:
        if algo in ("em", "em-accel"):
            runner = fit_em_accel if algo == "em-accel" else engine.fit_em
            state = runner(spec, data, config)
        elif algo == "irls":
            res = baselines.irls_logistic(data, config)
            state = _baseline_as_state(spec, data, res)
        elif algo == "irls-pen":
            res = baselines.irls_penalized(spec, data, config)
            state = _baseline_as_state(spec, data, res)
        else:
            fg = baselines.objective_interface(spec, data)
            p = data.p + (1 if intercept else 0)
            run = baselines.bfgs_minimize if algo == "bfgs" \
                else baselines.nonlinear_cg_minimize
            res = run(fg, np.full(p, 1e-3), config)
            state = _baseline_as_state(spec, data, res)
    except VmmixError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)

    rep = report.fit_report(f"fit --algo {algo}", spec, data, state, config, seed)
    report.write_json(out, rep)
    click.echo(f"status: {state.status}  objective: {state.objective_trace[-1]:.10g}"
               f"  iterations: {state.iterations}  report: {out}")
    if state.status in ("failed", "diverged", "singular"):
        sys.exit(1)


def _baseline_as_state(spec, data, res):
    p = res.beta.size
    return engine.FitState(
        beta=res.beta, omega=np.zeros(data.n), lam=np.zeros(p),
        active=res.beta != 0.0, iterations=res.iterations,
        objective_trace=np.array([res.objective]), status=res.status,
        tau=spec.penalty.tau,
        diagnostics={"wall_time": res.wall_time})


def _parse_grid(text):
    try:
        lo, hi, num = text.split(":")
        return float(lo), float(hi), int(num)
    except ValueError:
        raise click.UsageError("grid must be LO:HI:K, e.g. 1e-3:1e3:100")


@main.command("path")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--response", required=True)
@click.option("--task", type=click.Choice(["regression", "classification"]),
              default="classification", show_default=True)
@click.option("--likelihood", default="logistic", show_default=True)
@click.option("--penalty", required=True)
@click.option("--grid", default="1e-3:1e3:100", show_default=True,
              help="tau grid LO:HI:K")
@click.option("--algo", type=click.Choice(["em", "em-accel", "irls-pen"]),
              default="em-accel", show_default=True)
@click.option("--cv", "cv_folds", type=int, default=0,
              help="cross-validation folds (0 disables)")
@click.option("--cv-loss", type=click.Choice(["check", "deviance", "squared"]),
              default="check", show_default=True)
@click.option("--intercept/--no-intercept", default=False, show_default=True)
@click.option("--out-prefix", default="path", show_default=True)
@click.option("--plots/--no-plots", default=True, show_default=True)
@add_options(common_fit_options)
def path_cmd(data_path, response, task, likelihood, penalty, grid, algo,
             cv_folds, cv_loss, intercept, out_prefix, plots, seed, max_iter,
             tol_obj, tol_grad, accel):
    """Warm-started regularization path, optional CV, CSV + JSON + figures."""
    from .path import PathGrid, cv_select_tau, path_fit

    lik = parse_likelihood(likelihood)
    pen = parse_penalty(penalty)
    if task == "regression" and lik.is_classification:
        task = "classification"
    try:
        data = read_csv(data_path, response, task)
    except (ParseError, CodingError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    spec = ModelSpec(lik, pen, intercept=intercept)
    config = _config_from_options(seed, max_iter, tol_obj, tol_grad, accel)
    lo, hi, num = _parse_grid(grid)
    path_grid = PathGrid.log_spaced(lo, hi, num)

    result = path_fit(spec, data, path_grid, config, algo=algo)
    rows = result.rows()
    for row, pt in zip(rows, result.points):
        for j, b in enumerate(pt.beta):
            row[f"beta_{j}"] = float(b)
    report.write_csv(f"{out_prefix}_points.csv", rows)

    summary = {"command": "path", "algo": algo, "seed": seed,
               "version": __version__, "grid": {"lo": lo, "hi": hi, "num": num},
               "statuses": result.statuses,
               "n_converged": sum(s == "converged" for s in result.statuses),
               "config": report._plain(config)}

    cv_result = None
    if cv_folds:
        q = lik.q if lik.kind == "check_loss" else 0.5
        cv_result = cv_select_tau(spec, data, path_grid, folds=cv_folds,
                                  config=config, loss=cv_loss, q=q, seed=seed)
        report.write_csv(f"{out_prefix}_cv.csv", cv_result.rows())
        summary["cv"] = {"tau_star": cv_result.tau_star,
                         "folds": cv_folds, "loss": cv_loss}
    report.write_json(f"{out_prefix}_summary.json", summary)

    if plots:
        from . import plots as figs
        figs.plot_coefficient_paths(result, f"{out_prefix}_paths.png",
                                    title=f"{penalty} path ({algo})")
        if cv_result is not None:
            figs.plot_cv_curve(cv_result, f"{out_prefix}_cv.png")
    click.echo(f"path written to {out_prefix}_points.csv "
               f"({summary['n_converged']}/{num} points converged)")


@main.command()
@click.option("--design", required=True,
              help="factor:n:p:k | cov-factor:n:p:k | quantile[:n:p:q:sigma]")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--beta-out", type=click.Path(dir_okay=False), default=None)
@click.option("--test-out", type=click.Path(dir_okay=False), default=None,
              help="held-out set (quantile design only)")
def simulate(design, seed, out, beta_out, test_out):
    """Generate a synthetic dataset and write it as CSV."""
    from . import simbench

    parts = design.strip().lower().split(":")
    kind, args = parts[0], parts[1:]
    test = None
    try:
        if kind == "factor":
            n, p, k = (int(a) for a in args)
            data, beta = simbench.gen_factor_design(n, p, k, seed)
        elif kind == "cov-factor":
            n, p, k = (int(a) for a in args)
            data, beta = simbench.gen_cov_factor(n, p, k, seed)
        elif kind == "quantile":
            n, p, q, sigma = 50, 25, 0.9, 5.0
            if args:
                n, p = int(args[0]), int(args[1])
                if len(args) > 2:
                    q = float(args[2])
                if len(args) > 3:
                    sigma = float(args[3])
            data, test, beta = simbench.gen_quantile_sim(seed, n=n, p=p, q=q,
                                                         sigma=sigma)
        else:
            raise click.UsageError(f"unknown design {design!r}")
    except (ValueError, VmmixError) as err:
        raise click.UsageError(f"bad design {design!r}: {err}")

    _write_dataset_csv(out, data)
    if test is not None and test_out:
        _write_dataset_csv(test_out, test)
    if beta_out:
        report.write_csv(beta_out,
                         [{"coef": f"x{j}", "beta_true": float(b)}
                          for j, b in enumerate(beta)])
    click.echo(f"wrote {data.n}x{data.p} design to {out}")


def _write_dataset_csv(path, data):
    names = [f"x{j}" for j in range(data.p)]
    rows = []
    for i in range(data.n):
        row = {name: data.X[i, j] for j, name in enumerate(names)}
        row["y"] = data.y[i]
        rows.append(row)
    report.write_csv(path, rows, fieldnames=names + ["y"])


@main.command()
@click.option("--suite", required=True,
              type=click.Choice(["logistic-small", "logistic-large",
                                 "path-dpareto", "quantile-table3"]))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-prefix", default=None,
              help="defaults to the suite name")
@click.option("--replicates", type=int, default=50, show_default=True,
              help="quantile-table3 only")
@click.option("--grid-points", type=int, default=50, show_default=True,
              help="path-dpareto only")
@click.option("--workers", type=int, default=None,
              help="worker budget (or VMMIX_WORKERS)")
@click.option("--plots/--no-plots", default=True, show_default=True)
def bench(suite, seed, out_prefix, replicates, grid_points, workers, plots):
    """Run a named benchmark suite; emits CSV rows, a JSON summary, figures."""
    from . import plots as figs
    from . import simbench

    out_prefix = out_prefix or suite.replace("-", "_")
    workers = _workers_option(workers)

    if suite == "quantile-table3":
        res = simbench.suite_quantile_table3(seed=seed,
                                             n_replicates=replicates,
                                             workers=workers)
        report.write_csv(f"{out_prefix}_rows.csv", res["rows"])
        report.write_json(f"{out_prefix}_summary.json",
                          {k: v for k, v in res.items() if k != "rows"})
        if plots:
            figs.plot_quantile_summary(res["rows"], f"{out_prefix}.png")
        s = res["summary"]
        click.echo("mean estimation error: plain %.1f | lasso %.1f | dPareto %.1f"
                   % (s["unpenalized.est_error.mean"], s["lasso.est_error.mean"],
                      s["double_pareto.est_error.mean"]))
        click.echo("mean model size: plain %.1f | lasso %.1f | dPareto %.1f"
                   % (s["unpenalized.model_size.mean"], s["lasso.model_size.mean"],
                      s["double_pareto.model_size.mean"]))
        return

    if suite == "path-dpareto":
        res = simbench.suite_path_dpareto(seed=seed, num_grid=grid_points)
        report.write_csv(f"{out_prefix}_rows.csv", res["comparison"])
        em_ok = sum(pt.status == "converged" for pt in res["em_path"].points)
        irls_bad = sum(pt.status != "converged"
                       for pt in res["irls_path"].points)
        report.write_json(f"{out_prefix}_summary.json",
                          {"suite": suite, "seed": seed,
                           "em_converged": em_ok,
                           "irls_failures": irls_bad,
                           "grid_points": grid_points,
                           "version": __version__})
        if plots:
            figs.plot_coefficient_paths(res["em_path"], f"{out_prefix}.png",
                                        irls_path=res["irls_path"],
                                        title="double-Pareto logistic path")
        click.echo(f"EM converged at {em_ok}/{grid_points} points; "
                   f"penalized IRLS failed at {irls_bad}")
        return

    runner = simbench.SUITES[suite]
    res = runner(seed=seed)
    rows = res["report"].as_dicts()
    report.write_csv(f"{out_prefix}_rows.csv", rows)
    statuses = {f"{r['algorithm']}/{r['start']}": r["status"] for r in rows}
    report.write_json(f"{out_prefix}_summary.json",
                      {"suite": suite, "seed": seed, "statuses": statuses,
                       "version": __version__})
    if plots:
        figs.plot_bench_times(res["report"], f"{out_prefix}.png", title=suite)
    bad = sum(1 for r in rows if r["status"] != "converged")
    click.echo(f"{len(rows)} cells, {bad} non-converged; rows in "
               f"{out_prefix}_rows.csv")


@main.command("posterior-mean")
@click.option("--prior", required=True, help=f"one of: {PENALTY_VOCAB}")
@click.option("--tau", type=float, default=1.0, show_default=True)
@click.option("--mu-beta", type=float, default=0.0, show_default=True)
@click.option("--y", "y_value", type=float, required=True)
@click.option("--likelihood-sd", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def posterior_mean_cmd(prior, tau, mu_beta, y_value, likelihood_sd, out):
    """Spot-evaluate the mixture posterior mean and its quadrature oracle."""
    from .posterior_mean import (LocationProblem, gaussian_likelihood,
                                 marginal, masreliez_mean, oracle_mean)

    pen = parse_penalty(prior, tau=tau)
    if mu_beta:
        pen = replace(pen, mu_beta=mu_beta)
    try:
        prob = LocationProblem(gaussian_likelihood(likelihood_sd), pen,
                               y=y_value, likelihood_scale=likelihood_sd)
        payload = {
            "prior": prior, "tau": tau, "mu_beta": mu_beta, "y": y_value,
            "likelihood_sd": likelihood_sd,
            "posterior_mean": masreliez_mean(prob),
            "oracle_mean": oracle_mean(prob),
            "marginal_density": marginal(prob),
            "version": __version__,
        }
    except VmmixError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    text = report.to_json(payload)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    click.echo(text)


@main.command("identity-check")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def identity_check(out):
    """Verify the closed-form densities and moments against quadrature."""
    rows = report.identity_report()
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        flag = "pass" if r["pass"] else "FAIL"
        click.echo(f"{r['check']:<{width}}  max_rel_err={r['max_rel_err']:.3e}"
                   f"  tol={r['tol']:.0e}  [{flag}]")
    if out:
        report.write_json(out, {"checks": rows, "version": __version__})
    if not all(r["pass"] for r in rows):
        sys.exit(1)
    click.echo(f"all {len(rows)} identity checks passed")


if __name__ == "__main__":
    main()
