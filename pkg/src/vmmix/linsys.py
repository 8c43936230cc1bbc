"""Penalized weighted least-squares systems for the M-step.

Every maximization step reduces to a symmetric positive-definite solve

    (sigma^-2 X_eff' Omega X_eff + tau^-2 Lambda) beta = rhs.

``solve_spd`` factors with a jitter ladder so that round-off never masquerades
as hard singularity; in strict mode (used by the baseline optimizers) it also
fails on an ill-conditioned factor, which is the "numerically singular"
failure mode those algorithms are expected to exhibit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .exceptions import DimensionMismatch, SingularSystem

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4)


@dataclass
class SpdSystem:
    """A symmetric system A x = rhs with A expected PSD up to round-off."""

    A: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.rhs.shape != (self.A.shape[0],):
            raise DimensionMismatch(
                f"rhs shape {self.rhs.shape} does not match A {self.A.shape}")
        asym = np.max(np.abs(self.A - self.A.T)) if self.A.size else 0.0
        scale = max(1.0, np.max(np.abs(self.A))) if self.A.size else 1.0
        if asym > 1e-12 * scale:
            raise DimensionMismatch("A is not symmetric to 1e-12")


def solve_spd(system: SpdSystem, *, min_rcond: float | None = None,
              use_jitter: bool = True) -> np.ndarray:
    """Solve an SPD system by Cholesky with jitter escalation.

    The ladder adds eps * diag(A) for eps in JITTER_LADDER until the
    factorization succeeds; exhaustion raises SingularSystem.  With
    ``min_rcond`` set, the ladder is disabled and a factorization whose
    estimated reciprocal condition number falls below the floor raises
    SingularSystem as well: failures must be reported, not masked, when the
    caller is a baseline algorithm under study.
    """
    A, rhs = system.A, system.rhs
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
        raise SingularSystem("non-finite entries in the linear system")
    d = np.diag(A).copy()

    ladder = JITTER_LADDER if (use_jitter and min_rcond is None) else (0.0,)
    chol = None
    used_eps = 0.0
    for eps in ladder:
        Aj = A if eps == 0.0 else A + np.diag(eps * d)
        try:
            chol = linalg.cho_factor(Aj, lower=True, check_finite=False)
            used_eps = eps
            break
        except linalg.LinAlgError:
            continue
    if chol is None:
        raise SingularSystem("jitter ladder exhausted; system is singular")

    if min_rcond is not None:
        anorm = linalg.norm(A, 1)
        rcond, info = lapack.dpocon(chol[0], anorm, uplo=b"L")
        if info != 0 or not np.isfinite(rcond) or rcond < min_rcond:
            raise SingularSystem(
                f"system numerically singular (rcond={rcond:.3e})", rcond=rcond)

    x = linalg.cho_solve(chol, rhs, check_finite=False)
    if used_eps > 0.0:
        # refine against the unjittered matrix
        for _ in range(3):
            r = rhs - A @ x
            if np.max(np.abs(r)) <= 1e-10 * (1.0 + np.max(np.abs(rhs))):
                break
            x = x + linalg.cho_solve(chol, r, check_finite=False)
    return x


def assemble_mstep(X_eff: np.ndarray, omega: np.ndarray, lam: np.ndarray, *,
                   sigma: float, tau: float, mu_z, kappa_z,
                   mu_beta: float, kappa_beta: float, mode: str,
                   y: np.ndarray | None = None,
                   penalized: np.ndarray | None = None) -> SpdSystem:
    """Assemble the penalized weighted least-squares system of the M-step.

    Regression (z = y - X beta):
        A   = sigma^-2 X' Omega X + tau^-2 Lambda
        rhs = sigma^-2 X'(Omega y - mu_z omega - kappa_z 1)
              + tau^-2 (mu_beta lambda + kappa_beta 1)

    Classification (z = X_eff beta with rows y_i x_i) and offset blocks:
        rhs data term flips to sigma^-2 X_eff'(mu_z omega + kappa_z 1).

    ``mu_z`` and ``kappa_z`` may be scalars or per-observation vectors (the
    multinomial block update passes vectors).  ``penalized`` masks the
    coordinates that carry a prior; unpenalized columns (the intercept)
    contribute nothing to Lambda or the prior part of the rhs.
    """
    X_eff = np.asarray(X_eff, dtype=float)
    n, p = X_eff.shape
    omega = np.asarray(omega, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if omega.shape != (n,):
        raise DimensionMismatch(f"omega shape {omega.shape}, expected ({n},)")
    if lam.shape != (p,):
        raise DimensionMismatch(f"lambda shape {lam.shape}, expected ({p},)")
    if mode not in ("regression", "classification"):
        raise DimensionMismatch(f"unknown mode {mode!r}")
    mu_z = np.broadcast_to(np.asarray(mu_z, dtype=float), (n,))
    kappa_z = np.broadcast_to(np.asarray(kappa_z, dtype=float), (n,))
    if penalized is None:
        penalized = np.ones(p, dtype=bool)

    s2 = sigma * sigma
    t2 = tau * tau
    lam_eff = np.where(penalized, lam, 0.0)

    Xw = X_eff * omega[:, None]
    A = (X_eff.T @ Xw) / s2
    A[np.diag_indices(p)] += lam_eff / t2

    if mode == "regression":
        if y is None:
            raise DimensionMismatch("regression assembly requires y")
        y = np.asarray(y, dtype=float)
        if y.shape != (n,):
            raise DimensionMismatch(f"y shape {y.shape}, expected ({n},)")
        data_term = X_eff.T @ (omega * y - mu_z * omega - kappa_z) / s2
    else:
        data_term = X_eff.T @ (mu_z * omega + kappa_z) / s2

    prior_term = (mu_beta * lam_eff + kappa_beta * penalized) / t2
    return SpdSystem(A=0.5 * (A + A.T), rhs=data_term + prior_term)
