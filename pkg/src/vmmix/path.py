"""Warm-started regularization paths over tau and cross-validated selection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, engine
from .engine import Dataset, FitConfig, ModelSpec
from .exceptions import DomainError, InsufficientData

DEFAULT_GRID = (1e-3, 1e3, 100)


@dataclass(frozen=True)
class PathGrid:
    """Strictly increasing tau grid."""

    tau_values: np.ndarray

    def __post_init__(self):
        tv = np.asarray(self.tau_values, dtype=float)
        object.__setattr__(self, "tau_values", tv)
        if tv.size < 2:
            raise DomainError("a path grid needs at least two points")
        if np.any(tv <= 0) or np.any(np.diff(tv) <= 0):
            raise DomainError("tau grid must be positive and strictly increasing")

    @classmethod
    def log_spaced(cls, lo: float = DEFAULT_GRID[0], hi: float = DEFAULT_GRID[1],
                   num: int = DEFAULT_GRID[2]) -> "PathGrid":
        if not (0 < lo < hi):
            raise DomainError("need 0 < lo < hi")
        return cls(np.geomspace(lo, hi, num))

    @property
    def K(self):
        return self.tau_values.size


@dataclass
class PathPoint:
    tau: float
    beta: np.ndarray
    objective: float
    n_active: int
    status: str
    iterations: int

    def as_row(self):
        return {"tau": self.tau, "log_inv_tau": float(-np.log(self.tau)),
                "objective": self.objective, "n_active": self.n_active,
                "status": self.status, "iterations": self.iterations}


@dataclass
class PathResult:
    points: list
    algo: str

    @property
    def taus(self):
        return np.array([pt.tau for pt in self.points])

    @property
    def coefficients(self):
        return np.vstack([pt.beta for pt in self.points])

    @property
    def statuses(self):
        return [pt.status for pt in self.points]

    def rows(self):
        return [pt.as_row() for pt in self.points]


def path_fit(spec: ModelSpec, data: Dataset, grid: PathGrid,
             config: FitConfig | None = None, algo: str = "em") -> PathResult:
    """Sequential fits over the tau grid with warm starts.

    The first point starts from 1e-3 on every coordinate (the small-tau end
    constrains everything to near zero); each later point starts from the
    last successful solution.  Failures are recorded per point and the path
    continues from the last good warm start.
    """
    config = config or FitConfig()
    if algo not in ("em", "em-accel", "irls-pen"):
        raise DomainError(f"unknown path algorithm {algo!r}")
    points = []
    warm_beta = None
    warm_active = None
    p_total = data.p + (1 if spec.intercept else 0)

    for tau in grid.tau_values:
        spec_t = replace(spec, penalty=spec.penalty.with_tau(float(tau)))
        if algo == "irls-pen":
            beta0 = np.full(p_total, 1e-3) if warm_beta is None else warm_beta
            res = baselines.irls_penalized(spec_t, data, config, beta0)
            ok = res.converged
            points.append(PathPoint(float(tau), res.beta, res.objective,
                                    int(np.sum(res.beta != 0.0)), res.status,
                                    res.iterations))
            if ok:
                warm_beta = res.beta.copy()
            continue
        if algo == "em-accel":
            from .accel import fit_em_accel
            runner = fit_em_accel
        else:
            runner = engine.fit_em
        beta0 = np.full(p_total, 1e-3) if warm_beta is None else warm_beta
        st = runner(spec_t, data, config, beta0, active0=warm_active)
        points.append(PathPoint(float(tau), st.beta, st.objective,
                                st.n_active(skip_first=spec.intercept),
                                st.status, st.iterations))
        if st.status != engine.STATUS_FAILED:
            warm_beta = st.beta.copy()
            warm_active = st.active.copy()
    return PathResult(points=points, algo=algo)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def _check_loss(q):
    def loss(y, pred):
        t = y - pred
        return np.abs(t) / 2.0 + (q - 0.5) * t
    return loss


def validation_loss(kind: str, q: float = 0.5):
    """Per-observation validation losses: check(q), deviance, squared."""
    if kind == "check":
        return _check_loss(q)
    if kind == "deviance":
        def loss(y, pred):
            return 2.0 * np.logaddexp(0.0, -y * pred)
        return loss
    if kind == "squared":
        def loss(y, pred):
            return (y - pred) ** 2
        return loss
    raise DomainError(f"unknown validation loss {kind!r}")


def fold_assignments(n: int, folds: int, seed: int) -> np.ndarray:
    """Deterministic seeded fold labels in 0..folds-1."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % folds
    return labels


@dataclass
class CvResult:
    tau_star: float
    table: list          # rows: tau, fold, loss
    mean_losses: np.ndarray
    taus: np.ndarray
    folds: int
    seed: int

    def rows(self):
        return list(self.table)


def cv_select_tau(spec: ModelSpec, data: Dataset, grid: PathGrid,
                  folds: int, config: FitConfig | None = None,
                  loss: str = "check", q: float = 0.5,
                  seed: int | None = None) -> CvResult:
    """Pick tau by K-fold cross-validation; ties go to the smaller tau.

    Fold assignment is seeded and deterministic; within each fold the grid is
    fitted with warm starts from small tau upward.
    """
    config = config or FitConfig()
    seed = config.seed if seed is None else seed
    if folds < 2:
        raise InsufficientData("cross-validation needs at least 2 folds")
    if data.n < folds:
        raise InsufficientData("fewer observations than folds")
    loss_fn = validation_loss(loss, q=q)
    labels = fold_assignments(data.n, folds, seed)
    p_total = data.p + (1 if spec.intercept else 0)

    from .accel import fit_em_accel
    runner = fit_em_accel if config.accel else engine.fit_em

    K = grid.K
    losses = np.full((K, folds), np.nan)
    for fold in range(folds):
        train = labels != fold
        valid = ~train
        dtr = Dataset(X=data.X[train], y=data.y[train], task=data.task,
                      n_classes=data.n_classes)
        Xv, yv = data.X[valid], data.y[valid]
        if spec.intercept:
            Xv = np.column_stack([np.ones(Xv.shape[0]), Xv])
        warm_beta, warm_active = None, None
        for i, tau in enumerate(grid.tau_values):
            spec_t = replace(spec, penalty=spec.penalty.with_tau(float(tau)))
            beta0 = np.full(p_total, 1e-3) if warm_beta is None else warm_beta
            st = runner(spec_t, dtr, config, beta0, active0=warm_active)
            if st.status != engine.STATUS_FAILED:
                warm_beta, warm_active = st.beta.copy(), st.active.copy()
            pred = Xv @ st.beta
            losses[i, fold] = float(np.mean(loss_fn(yv, pred)))

    mean_losses = losses.mean(axis=1)
    best = int(np.argmin(mean_losses))  # argmin takes the first (smallest tau)
    table = [{"tau": float(grid.tau_values[i]), "fold": f,
              "loss": float(losses[i, f])}
             for i in range(K) for f in range(folds)]
    return CvResult(tau_star=float(grid.tau_values[best]), table=table,
                    mean_losses=mean_losses, taus=grid.tau_values.copy(),
                    folds=folds, seed=seed)
