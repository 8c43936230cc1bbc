"""EM solvers for penalized regression and classification via
normal variance-mean mixtures."""

__version__ = "0.1.0"

from .families import (
    LikelihoodFamily,
    MixingDistribution,
    PenaltyFamily,
    likelihood_family,
    penalty_family,
)

__all__ = [
    "LikelihoodFamily",
    "MixingDistribution",
    "PenaltyFamily",
    "likelihood_family",
    "penalty_family",
    "__version__",
]
