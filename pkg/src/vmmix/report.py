"""Report containers, canonical serialization, and the identity-check battery.

Reports are JSON (sorted keys) plus CSV tables.  Timing measurements live
under dedicated keys ("timings" dicts and "wall_time" columns) so that the
determinism contract - same config and seed give byte-identical non-timing
content - can be checked by stripping exactly those fields.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from . import __version__, families

TIMING_KEYS = ("timings", "wall_time", "elapsed_s")


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_json(obj, indent: int = 2) -> str:
    """Canonical JSON: plain types, sorted keys, fixed float repr."""
    return json.dumps(_plain(obj), sort_keys=True, indent=indent)


def strip_timing(obj):
    """Recursively drop timing fields; used by the determinism checks."""
    obj = _plain(obj)

    def walk(o):
        if isinstance(o, dict):
            return {k: walk(v) for k, v in o.items() if k not in TIMING_KEYS}
        if isinstance(o, list):
            return [walk(v) for v in o]
        return o
    return walk(obj)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(obj))
        fh.write("\n")


def write_csv(path, rows, fieldnames=None):
    """Write a list of dicts with a fixed column order."""
    rows = [_plain(r) for r in rows]
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class FitReport:
    """Round-trippable record of one fit."""

    command: str
    status: str
    coefficients: dict
    active: list
    objective: float
    iterations: int
    objective_trace: list
    seed: int
    config: dict
    version: str = __version__
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return to_json(self)

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        raw = json.loads(text)
        return cls(**raw)


def fit_report(command, spec, data, state, config, seed) -> FitReport:
    names = list(data.column_names) if data.column_names else \
        [f"x{j}" for j in range(data.p)]
    if spec.intercept:
        names = ["intercept"] + names
    coefficients = {name: float(b) for name, b in zip(names, state.beta)}
    active = [name for name, a in zip(names, state.active) if a]
    cfg = _plain(config)
    return FitReport(
        command=command, status=state.status, coefficients=coefficients,
        active=active, objective=float(state.objective_trace[-1]),
        iterations=int(state.iterations),
        objective_trace=[float(v) for v in state.objective_trace],
        seed=seed, config=cfg,
        timings={"wall_time": state.diagnostics.get("wall_time", float("nan"))},
        extra={"reason": state.reason, "tau": state.tau},
    )


# ---------------------------------------------------------------------------
# Identity-check battery
# ---------------------------------------------------------------------------

def _moment_oracle_rows():
    grid = np.linspace(-3.0, 3.0, 50)
    cases = [
        ("lasso moment", families.penalty_family("lasso", tau=1.0)),
        ("hyperbolic(1,0.3) moment",
         families.penalty_family("hyperbolic", tau=1.0, alpha=1.0, kappa=0.3)),
        ("hyperbolic(2,1) moment",
         families.penalty_family("hyperbolic", tau=1.0, alpha=2.0, kappa=1.0)),
        ("check-loss(q=0.25) moment", families.likelihood_family("check_loss", q=0.25)),
        ("check-loss(q=0.75) moment", families.likelihood_family("check_loss", q=0.75)),
    ]
    rows = []
    for name, fam in cases:
        closed = fam.lam(grid) if hasattr(fam, "lam") else fam.omega(grid)
        errs = []
        for x, c in zip(grid, np.atleast_1d(closed)):
            oracle = families.oracle_moment_quadrature(fam, float(x))
            errs.append(abs(c - oracle) / abs(oracle))
        rows.append({"check": name, "points": grid.size,
                     "max_rel_err": float(np.max(errs)), "tol": 1e-6})
    return rows


def _mixture_identity_rows():
    rows = []
    thetas = np.linspace(-3.0, 3.0, 13)

    for alpha, kappa in [(1.0, 0.0), (1.0, 0.5), (2.0, 1.0)]:
        mix = families.MixingDistribution.gig(
            1.0, math.sqrt(alpha * alpha - kappa * kappa), 0.0)
        errs = []
        for th in thetas:
            lhs = families.hyperbolic_density(float(th), 0.0, alpha, kappa)
            rhs = families.mixture_density_quadrature(0.0, kappa, mix, float(th))
            errs.append(abs(lhs - rhs) / lhs)
        rows.append({"check": f"hyperbolic({alpha:g},{kappa:g}) mixture",
                     "points": thetas.size,
                     "max_rel_err": float(np.max(errs)), "tol": 1e-5})

    errs = []
    for th in thetas:
        lhs = math.exp(-2.0 * max(1.0 - float(th), 0.0))
        rhs = families.mixture_density_quadrature(1.0, 1.0, None, float(th),
                                                  weight=lambda v: 1.0)
        errs.append(abs(lhs - rhs) / lhs)
    rows.append({"check": "hinge limiting mixture", "points": thetas.size,
                 "max_rel_err": float(np.max(errs)), "tol": 1e-5})

    q = 0.8
    errs = []
    for th in thetas:
        rho = abs(float(th)) / 2.0 + (q - 0.5) * float(th)
        lhs = math.exp(-2.0 * rho)
        rhs = families.mixture_density_quadrature(
            0.0, 1.0 - 2.0 * q, None, float(th),
            weight=lambda v: math.exp(-2.0 * q * (1.0 - q) * v))
        errs.append(abs(lhs - rhs) / lhs)
    rows.append({"check": "check-loss limiting mixture", "points": thetas.size,
                 "max_rel_err": float(np.max(errs)), "tol": 1e-5})

    zs = np.linspace(-3.0, 3.0, 25)
    logi = np.abs(families.z_density(zs, 0.0, 1.0, 0.5)
                  - 1.0 / (1.0 + np.exp(-zs)))
    rows.append({"check": "z-density logistic case", "points": zs.size,
                 "max_rel_err": float(np.max(logi)), "tol": 1e-12})
    return rows


def _normalization_rows():
    from scipy import integrate as si
    rows = []
    for psi, gamma, delta in [(1.0, 1.0, 0.0), (2.5, 0.7, 0.0), (0.5, 1.0, 1.0)]:
        val, _ = si.quad(lambda v: families.gig_density(v, psi, gamma, delta),
                         0, np.inf, limit=300)
        rows.append({"check": f"gig({psi:g},{gamma:g},{delta:g}) normalization",
                     "points": 1, "max_rel_err": abs(val - 1.0), "tol": 1e-6})
    val, _ = si.quad(lambda t: families.hyperbolic_density(t, 0.0, 1.0, 0.4),
                     -80, 80)
    rows.append({"check": "hyperbolic(1,0.4) normalization", "points": 1,
                 "max_rel_err": abs(val - 1.0), "tol": 1e-6})
    val, _ = si.quad(lambda t: families.z_density(t, 0.0, 2.0, 0.5), -60, 60)
    rows.append({"check": "z(2,0.5) normalization", "points": 1,
                 "max_rel_err": abs(val - 1.0), "tol": 1e-6})
    return rows


def identity_report() -> list:
    """Run every density/moment identity check; one row per check."""
    rows = _moment_oracle_rows() + _mixture_identity_rows() + _normalization_rows()
    for row in rows:
        row["pass"] = bool(row["max_rel_err"] < row["tol"])
    return rows
