"""Local mixture models of natural exponential families with quadratic
variance functions."""

from .errors import (AccuracyError, DomainError, FitFailure, InfeasibleError, IterationLimitError,
                     LocmixError, PositivityError, SingularityError, SupportError, UnsupportedError)
from .nef import FamilySpec, binomial, normal, poisson
from .lmm import LocalMixtureModel, lmm_density, positivity_check, hard_boundary, moment_vector
from .mixing import DiscreteMixing, DispersionMixing, localize, phi_map, two_point
from .region import LambdaRegion, MomentCurve, is_true_local_mixture, region_membership
from .inference import FiberProblem, Sample, fiber_mle, integrated_likelihood, profile_fit

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "DomainError", "FitFailure", "InfeasibleError", "IterationLimitError",
    "LocmixError", "PositivityError", "SingularityError", "SupportError", "UnsupportedError",
    "FamilySpec", "binomial", "normal", "poisson",
    "LocalMixtureModel", "lmm_density", "positivity_check", "hard_boundary", "moment_vector",
    "DiscreteMixing", "DispersionMixing", "localize", "phi_map", "two_point",
    "LambdaRegion", "MomentCurve", "is_true_local_mixture", "region_membership",
    "FiberProblem", "Sample", "fiber_mle", "integrated_likelihood", "profile_fit",
    "__version__",
]
