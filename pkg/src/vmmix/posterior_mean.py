"""Posterior means for scalar location problems under mixture priors.

For a symmetric location likelihood p(y - b) and a variance-mean mixture
prior b | v ~ N(mu + kappa v, tau^2 v), v ~ q, the posterior mean has a
score-function representation built from two predictive densities: the
marginal m(y) under the prior, and the tilted marginal m*(y) under the
v-size-biased prior.  Writing E(v) for the mean of the mixing law,

    E(b | y) = mu + E(v) * (m*(y) / m(y)) * (kappa - tau^2 d/dy log m*(y)).

The point-mass case reduces to the classical Gaussian-prior formula
mu + kappa - tau^2 d/dy log m(y).  A brute-force quadrature oracle
(``oracle_mean``) provides the independent check.

Marginals are convolutions over b with an inner mixture integral over v.
When the likelihood is Gaussian the b-integral is carried out analytically
and only the v-integral is left to quadrature; when the prior mixing has a
closed-form marginal (point mass, or the exponential-type GIG giving a
hyperbolic prior) the v-integral disappears instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .exceptions import DomainError, IntegrationFailure, UndefinedMean
from .families import (
    MixingDistribution,
    PenaltyFamily,
    hyperbolic_density,
    mixture_density_quadrature,
)

FD_STEP = 1e-5          # central-difference step for d/dy log m*(y)
SYMMETRY_POINTS = 10
SYMMETRY_RTOL = 1e-8


def gaussian_likelihood(sd: float = 1.0):
    """N(0, sd^2) error density, tagged so convolutions can use closed forms."""
    if sd <= 0:
        raise DomainError("sd must be positive")

    def dens(t):
        return math.exp(-0.5 * (t / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    dens.gaussian_sd = sd
    return dens


def laplace_likelihood(scale: float = 1.0):
    """Laplace error density."""
    if scale <= 0:
        raise DomainError("scale must be positive")

    def dens(t):
        return math.exp(-abs(t) / scale) / (2.0 * scale)
    return dens


@dataclass
class LocationProblem:
    """One scalar observation with a symmetric likelihood and mixture prior.

    ``likelihood_density`` is an evaluable density of the error y - b;
    ``likelihood_scale`` is its rough spread, used only to size integration
    windows.  The prior must carry point-mass or GIG mixing.
    """

    likelihood_density: callable
    prior: PenaltyFamily
    y: float
    likelihood_scale: float = 1.0

    def __post_init__(self):
        mixing = self.prior.mixing
        if mixing.kind not in ("point_mass", "gig"):
            raise DomainError(
                f"posterior mean needs point-mass or gig mixing, got {mixing.kind!r}")
        pts = np.linspace(0.3, 3.0, SYMMETRY_POINTS) * self.likelihood_scale
        left = np.array([self.likelihood_density(-t) for t in pts])
        right = np.array([self.likelihood_density(t) for t in pts])
        scale = np.max(np.abs(right)) + 1e-300
        if np.max(np.abs(left - right)) > SYMMETRY_RTOL * scale:
            raise DomainError("likelihood density is not symmetric in y - b")

    # -- prior densities ------------------------------------------------

    def _mixing(self, tilted: bool):
        mixing = self.prior.mixing
        if tilted and mixing.kind == "gig":
            return mixing.size_biased()
        return mixing

    def prior_has_closed_form(self, tilted: bool = False) -> bool:
        mixing = self._mixing(tilted)
        return mixing.kind == "point_mass" or \
            (mixing.psi == 1.0 and mixing.delta == 0.0)

    def prior_density(self, b, tilted: bool = False):
        pen = self.prior
        mixing = self._mixing(tilted)
        tau = pen.tau
        u = (np.asarray(b, dtype=float) - pen.mu_beta) / tau
        tilt = pen.kappa_beta / tau
        if mixing.kind == "point_mass":
            v0 = mixing.v0
            out = np.exp(-0.5 * (u - tilt * v0) ** 2 / v0) \
                / math.sqrt(2.0 * math.pi * v0) / tau
            return out if out.ndim else float(out)
        if mixing.psi == 1.0 and mixing.delta == 0.0:
            alpha = math.sqrt(mixing.gamma ** 2 + tilt ** 2)
            return hyperbolic_density(u, 0.0, alpha, tilt) / tau
        if np.ndim(u):
            return np.array([mixture_density_quadrature(0.0, tilt, mixing, ui)
                             for ui in u]) / tau
        return mixture_density_quadrature(0.0, tilt, mixing, float(u)) / tau

    # -- convolution machinery -------------------------------------------

    def _window(self):
        pen = self.prior
        mean_v = pen.mixing.mean or 1.0
        spread = pen.tau * math.sqrt(mean_v) + abs(pen.kappa_beta) * mean_v
        half = 30.0 * (spread + self.likelihood_scale) \
            + abs(self.y) + abs(pen.mu_beta)
        return -half, half

    def _quad(self, integrand, lo, hi, points=None):
        out, err = integrate.quad(integrand, lo, hi, limit=400,
                                  epsabs=1e-12, epsrel=1e-9, points=points)
        if not np.isfinite(out) or (out > 0 and err > 1e-5 * out + 1e-10):
            raise IntegrationFailure(
                f"quadrature failed (value={out}, err={err})")
        return out

    def _convolve_beta_space(self, weight, tilted, y):
        lo, hi = self._window()

        def integrand(b):
            val = self.likelihood_density(y - b) * self.prior_density(b, tilted)
            return val if weight is None else weight(b) * val

        return self._quad(integrand, lo, hi, points=[y, self.prior.mu_beta])

    def _convolve_v_space(self, tilted, y, posterior_mean_weight=False):
        """Gaussian likelihood: integrate the closed-form b-convolution over v.

        With b | v ~ N(m_v, V_v) and e ~ N(0, s^2), the inner integral is
        N(y; m_v, V_v + s^2), and the b-weighted version carries the factor
        (V_v y + s^2 m_v) / (V_v + s^2).
        """
        pen = self.prior
        mixing = self._mixing(tilted)
        s2 = self.likelihood_density.gaussian_sd ** 2
        t2 = pen.tau ** 2

        def integrand(t):
            v = math.exp(t)
            m_v = pen.mu_beta + pen.kappa_beta * v
            tot = t2 * v + s2
            val = math.exp(-0.5 * (y - m_v) ** 2 / tot) \
                / math.sqrt(2.0 * math.pi * tot) * mixing.density(v) * v
            if posterior_mean_weight:
                val *= (t2 * v * y + s2 * m_v) / tot
            return val

        return self._quad(integrand, -45.0, 35.0)

    def convolve(self, *, weight=None, tilted=False, y=None,
                 posterior_mean_weight=False):
        y = self.y if y is None else y
        gaussian = getattr(self.likelihood_density, "gaussian_sd", None)
        if self.prior_has_closed_form(tilted) and not posterior_mean_weight:
            return self._convolve_beta_space(weight, tilted, y)
        if gaussian is not None and weight is None:
            return self._convolve_v_space(tilted, y,
                                          posterior_mean_weight=posterior_mean_weight)
        if posterior_mean_weight:
            return self._convolve_beta_space(lambda b: b, tilted, y)
        return self._convolve_beta_space(weight, tilted, y)


def marginal(problem: LocationProblem, y: float | None = None) -> float:
    """Predictive density m(y) = int p(y - b) p(b) db."""
    return problem.convolve(y=y)


def tilted_marginal(problem: LocationProblem, y: float | None = None) -> float:
    """Predictive density under the size-biased mixing law.

    The tilted prior reweights the latent variance by v / E(v); for GIG
    mixing that is again a GIG (index raised by one).
    """
    if problem.prior.mixing.mean is None:
        raise UndefinedMean("mixing law has no finite mean; tilt undefined")
    return problem.convolve(tilted=True, y=y)


def masreliez_mean(problem: LocationProblem) -> float:
    """Posterior mean via the marginal-score representation."""
    pen = problem.prior
    mean_v = pen.mixing.mean
    if mean_v is None:
        raise UndefinedMean("mixing law has no finite mean")
    m = marginal(problem)
    ms = tilted_marginal(problem)
    h = FD_STEP
    dlog = (math.log(tilted_marginal(problem, problem.y + h))
            - math.log(tilted_marginal(problem, problem.y - h))) / (2.0 * h)
    return pen.mu_beta + mean_v * (ms / m) \
        * (pen.kappa_beta - pen.tau ** 2 * dlog)


def oracle_mean(problem: LocationProblem) -> float:
    """Brute-force posterior mean int b p(y-b) p(b) db / m(y)."""
    if problem.prior_has_closed_form(False):
        num = problem.convolve(weight=lambda b: b)
    else:
        num = problem.convolve(posterior_mean_weight=True)
    den = problem.convolve()
    return num / den
