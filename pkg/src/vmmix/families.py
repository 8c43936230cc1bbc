"""Catalog of likelihood and penalty families as normal variance-mean mixtures.

Every family here corresponds to a marginal of the hierarchy

    z | v  ~  N(mu + kappa * v, scale^2 * v),      v ~ P(v),

where v is a latent variance scale.  The loss (negative log marginal, up to a
constant) is ``f``; its derivative determines the conditional moment of the
*inverse* latent, E(1/v | z), which is what the EM engine consumes:

    (z - mu) * E(1/v | z) = kappa_z + scale^2 * f'(z).

Each family stores the closed-form moment; ``oracle_moment_quadrature``
recomputes it by 1-D adaptive quadrature for verification whenever the mixing
law has an evaluable density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.special import betaln, expit, gammaln, kve

from .exceptions import DomainError, KinkError, UnsupportedMixing

# Numerical policy constants.
EPS_KINK = 1e-10      # window for non-differentiability detection
EPS_LIMIT = 1e-8      # 0/0 window where analytic limits are substituted
MOMENT_CAP = 1e12     # omega/lambda clip applied before the M-step

LIKELIHOOD_KINDS = ("squared_error", "absolute_error", "check_loss",
                    "svm_hinge", "logistic", "hyperbolic")
PENALTY_KINDS = ("ridge", "lasso", "hyperbolic", "double_pareto", "none")


# ---------------------------------------------------------------------------
# Mixing distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixingDistribution:
    """Law of the latent variance scale v in the mixture representation.

    ``kind`` is one of ``point_mass``, ``gig``, ``polya``, ``improper_limit``.
    GIG parameters follow the (psi, gamma, delta) order with density
    proportional to v^(psi-1) * exp(-(delta^2/v + gamma^2 v)/2).  The Polya
    kind is a marker only: no closed-form density exists, so it supports
    neither ``density`` nor quadrature.
    """

    kind: str
    v0: float = 1.0                 # point_mass location
    psi: float = float("nan")       # gig index
    gamma: float = float("nan")     # gig exponential-decay parameter
    delta: float = float("nan")     # gig inverse-decay parameter
    alpha: float = float("nan")     # polya shape
    kappa: float = float("nan")     # polya tilt
    tag: str = ""                   # improper_limit label

    @classmethod
    def point_mass(cls, v0: float) -> "MixingDistribution":
        if v0 <= 0:
            raise DomainError("point mass location must be positive")
        return cls(kind="point_mass", v0=float(v0))

    @classmethod
    def gig(cls, psi: float, gamma: float, delta: float) -> "MixingDistribution":
        _check_gig_params(psi, gamma, delta)
        return cls(kind="gig", psi=float(psi), gamma=float(gamma), delta=float(delta))

    @classmethod
    def polya(cls, alpha: float, kappa: float) -> "MixingDistribution":
        return cls(kind="polya", alpha=float(alpha), kappa=float(kappa))

    @classmethod
    def improper_limit(cls, tag: str) -> "MixingDistribution":
        return cls(kind="improper_limit", tag=tag)

    @property
    def has_density(self) -> bool:
        return self.kind in ("point_mass", "gig")

    @property
    def mean(self):
        """E(v) where defined, else None.

        This is the size-bias normalizer used by the posterior-mean formula.
        """
        if self.kind == "point_mass":
            return self.v0
        if self.kind == "gig":
            return _gig_mean(self.psi, self.gamma, self.delta)
        return None

    def density(self, v):
        if self.kind == "gig":
            return gig_density(v, self.psi, self.gamma, self.delta)
        raise UnsupportedMixing(f"no evaluable density for mixing kind {self.kind!r}")

    def size_biased(self) -> "MixingDistribution":
        """Law of v under v-size-biasing, v * p(v) / E(v).

        For a GIG this is again a GIG with index psi + 1; for a point mass it
        is the same point mass.
        """
        if self.kind == "point_mass":
            return self
        if self.kind == "gig":
            if self.mean is None:
                raise UnsupportedMixing("size-biased law needs a finite mean")
            return MixingDistribution.gig(self.psi + 1.0, self.gamma, self.delta)
        raise UnsupportedMixing(f"cannot size-bias mixing kind {self.kind!r}")


def _check_gig_params(psi, gamma, delta):
    if gamma < 0 or delta < 0:
        raise DomainError("gig parameters must be nonnegative")
    if gamma == 0 and delta == 0:
        raise DomainError("gig requires gamma and delta not both zero")
    if delta == 0 and psi <= 0:
        raise DomainError("gig with delta=0 requires psi > 0")
    if gamma == 0 and psi >= 0:
        raise DomainError("gig with gamma=0 requires psi < 0")


def _gig_mean(psi, gamma, delta):
    """E(v) for GIG(psi, gamma, delta), or None when infinite."""
    if delta == 0:
        # Gamma(psi, rate gamma^2/2)
        return 2.0 * psi / (gamma * gamma)
    if gamma == 0:
        # Inverse-gamma(-psi, delta^2/2); mean finite only for -psi > 1
        a = -psi
        if a <= 1.0:
            return None
        return (delta * delta / 2.0) / (a - 1.0)
    x = delta * gamma
    # kve is exp(x)*K_nu(x); the exponential factors cancel in the ratio.
    return (delta / gamma) * kve(psi + 1.0, x) / kve(psi, x)


# ---------------------------------------------------------------------------
# Closed-form densities used by the identity checks
# ---------------------------------------------------------------------------

def gig_density(v, psi: float, gamma: float, delta: float):
    """Normalized generalized inverse-Gaussian density at v >= 0.

    Density proportional to v^(psi-1) exp{-(delta^2/v + gamma^2 v)/2}.  At
    v = 0 the limiting value is returned (finite for psi >= 1 or delta > 0).
    """
    _check_gig_params(psi, gamma, delta)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError("gig density defined on v >= 0 only")
    if delta == 0:
        rate = gamma * gamma / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            logpdf = psi * math.log(rate) - gammaln(psi) \
                + (psi - 1.0) * np.log(v) - rate * v
        out = np.exp(logpdf)
        if psi == 1.0:
            out = np.where(v == 0, rate, out)
        elif psi < 1.0:
            out = np.where(v == 0, np.inf, out)
        else:
            out = np.where(v == 0, 0.0, out)
        return out if out.ndim else float(out)
    if gamma == 0:
        a = -psi
        scale = delta * delta / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            logpdf = a * math.log(scale) - gammaln(a) \
                - (a + 1.0) * np.log(v) - scale / v
        out = np.where(v == 0, 0.0, np.exp(logpdf))
        return out if out.ndim else float(out)
    x = delta * gamma
    lognorm = psi * math.log(gamma / delta) - math.log(2.0) \
        - (math.log(kve(psi, x)) - x)
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = lognorm + (psi - 1.0) * np.log(v) \
            - (delta * delta / v + gamma * gamma * v) / 2.0
    out = np.where(v == 0, 0.0, np.exp(logpdf))
    return out if out.ndim else float(out)


def hyperbolic_density(theta, mu: float, alpha: float, kappa: float):
    """Hyperbolic density: (alpha^2-kappa^2)/(2 alpha) exp{-alpha|u| + kappa u}.

    u = theta - mu.  Requires alpha > |kappa|.
    """
    if alpha <= abs(kappa):
        raise DomainError("hyperbolic density requires alpha > |kappa|")
    u = np.asarray(theta, dtype=float) - mu
    out = (alpha * alpha - kappa * kappa) / (2.0 * alpha) \
        * np.exp(-alpha * np.abs(u) + kappa * u)
    return out if out.ndim else float(out)


def z_density(theta, mu: float, alpha: float, kappa: float):
    """Z-distribution density exp{alpha u} / (1+e^u)^{2(alpha-kappa)}, u = theta - mu.

    The normalizer is the Beta function of the induced Beta law of
    sigmoid(u), which has shape parameters (alpha, alpha - 2 kappa).  The
    boundary alpha = 2 kappa is the improper limiting case: the unnormalized
    value sigmoid(u)^alpha is returned there, which for alpha = 1 is the
    binary logistic pseudo-likelihood e^u / (1 + e^u).
    """
    if alpha <= 0:
        raise DomainError("z density requires alpha > 0")
    b = alpha - 2.0 * kappa
    if b < 0:
        raise DomainError("z density requires alpha - 2*kappa >= 0")
    u = np.asarray(theta, dtype=float) - mu
    logbody = alpha * u - 2.0 * (alpha - kappa) * np.logaddexp(0.0, u)
    if b == 0:
        out = np.exp(logbody)
    else:
        out = np.exp(logbody - betaln(alpha, b))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Likelihood families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LikelihoodFamily:
    """A loss f(z) with its mixture constants and conditional-moment formula.

    ``mu_z`` and ``kappa_z`` are the location and tilt from the mixture
    representation; ``sigma`` is the scale (fixed to 1 for the scale-free
    losses).  ``slope`` is the internal |.|-slope of the GIG-type losses.
    """

    kind: str
    sigma: float = 1.0
    q: float = float("nan")          # check-loss quantile level
    slope: float = 1.0               # |u| coefficient for GIG-type losses
    tilt: float = 0.0                # unit-scale mixture tilt
    mu_z: float = 0.0
    kappa_z: float = 0.0
    mixing: MixingDistribution = field(
        default_factory=lambda: MixingDistribution.point_mass(1.0))

    @property
    def is_classification(self) -> bool:
        return self.kind in ("svm_hinge", "logistic")

    # -- loss value -------------------------------------------------------

    def value(self, z):
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "squared_error":
            out = z * z / (2.0 * self.sigma * self.sigma)
        elif k == "logistic":
            out = np.logaddexp(0.0, -z)
        elif k == "svm_hinge":
            out = 2.0 * np.maximum(1.0 - z, 0.0)
        elif k == "check_loss":
            out = np.abs(z) + (2.0 * self.q - 1.0) * z
        else:  # absolute_error and the general hyperbolic loss
            u = (z - self.mu_z) / self.sigma
            out = self.slope * np.abs(u) - self.tilt * u
        return out if out.ndim else float(out)

    def deriv(self, z):
        """f'(z); raises KinkError within EPS_KINK of a non-differentiable point."""
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "squared_error":
            out = z / (self.sigma * self.sigma)
        elif k == "logistic":
            out = -expit(-z)
        else:
            u = z - self.mu_z
            bad = np.abs(u) < EPS_KINK
            if np.any(bad):
                raise KinkError(
                    f"{k} derivative requested within {EPS_KINK} of its kink",
                    indices=np.nonzero(np.atleast_1d(bad))[0])
            if k == "svm_hinge":
                out = np.where(z < 1.0, -2.0, 0.0)
            elif k == "check_loss":
                out = np.sign(z) + (2.0 * self.q - 1.0)
            else:
                out = (self.slope * np.sign(u) - self.tilt) / self.sigma
        return out if out.ndim else float(out)

    def omega(self, z):
        """Conditional moment E(omega | z), capped at MOMENT_CAP.

        squared error: 1; logistic: tanh(z/2)/(2z) with limit 1/4;
        GIG-type losses: slope * sigma / |z - mu_z|.
        """
        z = np.asarray(z, dtype=float)
        if self.kind == "squared_error":
            out = np.ones_like(z)
        elif self.kind == "logistic":
            small = np.abs(z) < EPS_LIMIT
            zsafe = np.where(small, 1.0, z)
            out = np.where(small, 0.25, np.tanh(zsafe / 2.0) / (2.0 * zsafe))
        else:
            u = np.abs(z - self.mu_z)
            with np.errstate(divide="ignore"):
                out = np.minimum(self.slope * self.sigma / u, MOMENT_CAP)
        return out if out.ndim else float(out)

    def log_norm_const(self):
        """log of the marginal-density normalizer, -log p(z) = f(z) + const.

        None when the marginal is an improper limit with no finite normalizer
        (hinge) or is only known unnormalized (logistic: p(z) = sigmoid(z)).
        """
        if self.kind == "squared_error":
            return -0.5 * math.log(2.0 * math.pi * self.sigma * self.sigma)
        if self.kind in ("absolute_error", "check_loss", "hyperbolic"):
            a, c = self.slope, self.tilt
            return math.log((a * a - c * c) / (2.0 * a) / self.sigma)
        return None


def likelihood_family(kind: str, *, q: float | None = None,
                      sigma: float = 1.0,
                      alpha: float | None = None,
                      kappa: float | None = None) -> LikelihoodFamily:
    """Construct a likelihood family with Table-1 constants enforced."""
    if kind not in LIKELIHOOD_KINDS:
        raise DomainError(f"unknown likelihood kind {kind!r}")
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if kind == "squared_error":
        return LikelihoodFamily(kind=kind, sigma=sigma,
                                mixing=MixingDistribution.point_mass(1.0))
    if kind == "absolute_error":
        return LikelihoodFamily(kind=kind, sigma=sigma, slope=1.0, tilt=0.0,
                                mixing=MixingDistribution.gig(1.0, 1.0, 0.0))
    if kind == "check_loss":
        if q is None or not 0.0 < q < 1.0:
            raise DomainError("check loss requires a quantile level q in (0, 1)")
        if sigma != 1.0:
            raise DomainError("check loss is defined at unit scale")
        kz = 1.0 - 2.0 * q
        return LikelihoodFamily(kind=kind, q=q, slope=1.0, tilt=kz, kappa_z=kz,
                                mixing=MixingDistribution.gig(
                                    1.0, math.sqrt(1.0 - kz * kz), 0.0))
    if kind == "svm_hinge":
        if sigma != 1.0:
            raise DomainError("hinge loss is defined at unit scale")
        return LikelihoodFamily(kind=kind, slope=1.0, tilt=1.0,
                                mu_z=1.0, kappa_z=1.0,
                                mixing=MixingDistribution.improper_limit("hinge"))
    if kind == "logistic":
        if sigma != 1.0:
            raise DomainError("the logistic likelihood is scale-free")
        return LikelihoodFamily(kind=kind, kappa_z=0.5,
                                mixing=MixingDistribution.polya(1.0, 0.5))
    # general hyperbolic loss, used mainly for oracle verification
    if alpha is None or kappa is None:
        raise DomainError("hyperbolic likelihood requires alpha and kappa")
    if alpha <= abs(kappa):
        raise DomainError("hyperbolic likelihood requires alpha > |kappa|")
    return LikelihoodFamily(kind=kind, sigma=sigma, slope=alpha, tilt=kappa,
                            kappa_z=sigma * kappa,
                            mixing=MixingDistribution.gig(
                                1.0, math.sqrt(alpha * alpha - kappa * kappa), 0.0))


# ---------------------------------------------------------------------------
# Penalty families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltyFamily:
    """A penalty g(b) with mixture constants and conditional-moment formula."""

    kind: str
    tau: float = 1.0
    mu_beta: float = 0.0
    kappa_beta: float = 0.0
    a: float = float("nan")          # double-Pareto shape
    slope: float = 1.0               # hyperbolic |u| coefficient
    tilt: float = 0.0                # unit-scale mixture tilt
    mixing: MixingDistribution = field(
        default_factory=lambda: MixingDistribution.point_mass(1.0))

    @property
    def sparsity_inducing(self) -> bool:
        return self.kind in ("lasso", "hyperbolic", "double_pareto")

    @property
    def convex(self) -> bool:
        return self.kind != "double_pareto"

    def with_tau(self, tau: float) -> "PenaltyFamily":
        if tau <= 0:
            raise DomainError("tau must be positive")
        if self.kind == "hyperbolic":
            return replace(self, tau=tau, kappa_beta=tau * self.tilt)
        return replace(self, tau=tau)

    def value(self, b):
        b = np.asarray(b, dtype=float)
        u = b - self.mu_beta
        k = self.kind
        if k == "none":
            out = np.zeros_like(b)
        elif k == "ridge":
            out = u * u / (2.0 * self.tau * self.tau)
        elif k == "lasso":
            out = np.abs(u) / self.tau
        elif k == "hyperbolic":
            out = (self.slope * np.abs(u) - self.tilt * u) / self.tau
        else:  # double_pareto
            out = (1.0 + self.a) * np.log1p(np.abs(u) / (self.a * self.tau))
        return out if out.ndim else float(out)

    def deriv(self, b):
        b = np.asarray(b, dtype=float)
        u = b - self.mu_beta
        k = self.kind
        if k == "none":
            out = np.zeros_like(b)
        elif k == "ridge":
            out = u / (self.tau * self.tau)
        else:
            bad = np.abs(u) < EPS_KINK
            if np.any(bad):
                raise KinkError(
                    f"{k} derivative requested within {EPS_KINK} of the prior mean",
                    indices=np.nonzero(np.atleast_1d(bad))[0])
            if k == "lasso":
                out = np.sign(u) / self.tau
            elif k == "hyperbolic":
                out = (self.slope * np.sign(u) - self.tilt) / self.tau
            else:
                out = (1.0 + self.a) * np.sign(u) / (self.a * self.tau + np.abs(u))
        return out if out.ndim else float(out)

    def lam(self, b):
        """Conditional moment E(lambda | b); +inf exactly at b = mu_beta.

        The cap is applied by the engine, not here: infinity is the sparsity
        signal for the active-set logic.
        """
        b = np.asarray(b, dtype=float)
        u = np.abs(b - self.mu_beta)
        k = self.kind
        if k == "none":
            out = np.zeros_like(b)
        elif k == "ridge":
            out = np.ones_like(b)
        else:
            with np.errstate(divide="ignore"):
                if k == "lasso":
                    out = self.tau / u
                elif k == "hyperbolic":
                    out = self.slope * self.tau / u
                else:
                    out = self.tau * self.tau * (1.0 + self.a) \
                        / (u * (self.a * self.tau + u))
        return out if out.ndim else float(out)

    def subgradient_interval(self):
        """(lo, hi) one-sided slopes of g at the prior mean; None if smooth."""
        k = self.kind
        if k == "lasso":
            hi = 1.0 / self.tau
            return -hi, hi
        if k == "hyperbolic":
            return (-(self.slope + self.tilt) / self.tau,
                    (self.slope - self.tilt) / self.tau)
        if k == "double_pareto":
            hi = (1.0 + self.a) / (self.a * self.tau)
            return -hi, hi
        return None


def penalty_family(kind: str, *, tau: float = 1.0, mu_beta: float = 0.0,
                   a: float | None = None, alpha: float | None = None,
                   kappa: float | None = None) -> PenaltyFamily:
    """Construct a penalty family.  Lasso is hyperbolic with (alpha, kappa) = (1, 0)."""
    if kind not in PENALTY_KINDS:
        raise DomainError(f"unknown penalty kind {kind!r}")
    if tau <= 0:
        raise DomainError("tau must be positive")
    if kind == "none":
        return PenaltyFamily(kind=kind, tau=tau, mu_beta=mu_beta)
    if kind == "ridge":
        return PenaltyFamily(kind=kind, tau=tau, mu_beta=mu_beta,
                             mixing=MixingDistribution.point_mass(1.0))
    if kind == "lasso":
        return PenaltyFamily(kind=kind, tau=tau, mu_beta=mu_beta,
                             slope=1.0, tilt=0.0,
                             mixing=MixingDistribution.gig(1.0, 1.0, 0.0))
    if kind == "hyperbolic":
        if alpha is None or kappa is None:
            raise DomainError("hyperbolic penalty requires alpha and kappa")
        if alpha <= abs(kappa):
            raise DomainError("hyperbolic penalty requires alpha > |kappa|")
        return PenaltyFamily(kind=kind, tau=tau, mu_beta=mu_beta,
                             slope=alpha, tilt=kappa, kappa_beta=tau * kappa,
                             mixing=MixingDistribution.gig(
                                 1.0, math.sqrt(alpha * alpha - kappa * kappa), 0.0))
    if a is None or a <= 0:
        raise DomainError("double-Pareto penalty requires a > 0")
    return PenaltyFamily(kind=kind, tau=tau, mu_beta=mu_beta, a=a,
                         mixing=MixingDistribution.improper_limit("double_pareto"))


# ---------------------------------------------------------------------------
# Spec-level operation aliases
# ---------------------------------------------------------------------------

def f_value(fam: LikelihoodFamily, z):
    return fam.value(z)


def f_deriv(fam: LikelihoodFamily, z):
    return fam.deriv(z)


def omega_moment(fam: LikelihoodFamily, z):
    return fam.omega(z)


def g_value(fam: PenaltyFamily, b):
    return fam.value(b)


def g_deriv(fam: PenaltyFamily, b):
    return fam.deriv(b)


def lambda_moment(fam: PenaltyFamily, b):
    return fam.lam(b)


# ---------------------------------------------------------------------------
# Quadrature oracle for the conditional moments
# ---------------------------------------------------------------------------

def _mixture_geometry(fam):
    """(mu, tilt, scale, mixing) of the family's unit-scale representation."""
    if isinstance(fam, LikelihoodFamily):
        if fam.kind == "squared_error":
            return 0.0, 0.0, fam.sigma, fam.mixing
        if fam.kind == "logistic":
            return 0.0, 0.5, 1.0, fam.mixing
        return fam.mu_z, fam.tilt, fam.sigma, fam.mixing
    if fam.kind == "ridge":
        return fam.mu_beta, 0.0, fam.tau, fam.mixing
    return fam.mu_beta, fam.tilt, fam.tau, fam.mixing


def oracle_moment_quadrature(fam, value: float) -> float:
    """E(latent | value) by adaptive quadrature over the latent variance.

    Integrates v^{-1} phi(u | tilt*v, v) p(v) dv over phi(u | tilt*v, v) p(v) dv
    with u the scale-standardized argument, in log-v coordinates with a
    max-shift for numerical stability.  Requires an evaluable mixing density.
    """
    mu, tilt, scale, mixing = _mixture_geometry(fam)
    if mixing.kind == "point_mass":
        return 1.0 / mixing.v0
    if mixing.kind != "gig":
        raise UnsupportedMixing(
            f"oracle quadrature unsupported for mixing kind {mixing.kind!r}")
    u = (float(value) - mu) / scale
    psi, gamma, delta = mixing.psi, mixing.gamma, mixing.delta

    # Log integrand of the denominator in t = log v, including the Jacobian.
    dd = delta * delta + u * u
    gg = gamma * gamma + tilt * tilt
    const = tilt * u

    def log_den(t):
        v = np.exp(t)
        return const + (psi - 0.5) * t - 0.5 * (dd / v + gg * v)

    # Peak of the denominator integrand: G x^2 - 2(psi-1/2) x - D = 0.
    c1 = psi - 0.5
    xstar = (c1 + math.sqrt(c1 * c1 + gg * dd)) / gg
    tstar = math.log(xstar)
    shift = log_den(tstar)
    lo, hi = tstar - 60.0, tstar + 60.0

    den, _ = integrate.quad(lambda t: math.exp(log_den(t) - shift),
                            lo, hi, epsabs=1e-13, epsrel=1e-10, limit=400)
    num, _ = integrate.quad(lambda t: math.exp(log_den(t) - t - shift),
                            lo, hi, epsabs=1e-13, epsrel=1e-10, limit=400)
    return num / den


def mixture_density_quadrature(mu: float, tilt: float,
                               mixing: MixingDistribution, theta,
                               weight=None) -> float:
    """Marginal density int phi(theta | mu + tilt*v, v) w(v) dv by quadrature.

    ``weight`` defaults to the mixing density; passing an explicit callable
    supports the improper limiting identities, where w is Lebesgue measure or
    an exponential factor rather than a probability density.
    """
    if weight is None:
        if not mixing.has_density:
            raise UnsupportedMixing(
                f"no evaluable density for mixing kind {mixing.kind!r}")
        weight = mixing.density
    u = float(theta) - mu

    def integrand(t):
        v = math.exp(t)
        w = weight(v)
        if w <= 0:
            return 0.0
        return math.exp(-0.5 * (u - tilt * v) ** 2 / v
                        - 0.5 * math.log(2.0 * math.pi * v)
                        + math.log(w) + t)

    out, _ = integrate.quad(integrand, -45.0, 35.0,
                            epsabs=1e-13, epsrel=1e-10, limit=500)
    return out
