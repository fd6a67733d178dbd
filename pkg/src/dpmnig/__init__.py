"""Dirichlet process mixtures of multivariate normal-inverse Gaussian distributions."""

from .datagen import MixtureSpec, generate, load_spec, sim1_spec, sim2_spec
from .distributions import (
    ComponentParams,
    GigParams,
    NotPositiveDefiniteError,
    gig_expectations,
    mnig_logpdf,
    mnig_mean_cov,
    sample_mnig,
)
from .evaluation import ContingencyTable, adjusted_rand_index, cross_tab
from .inference import FitResult, credible_intervals, estimate_params, fit, map_allocation
from .sampler import GibbsConfig, PosteriorDraws, RunDiagnostics, psrf, run
from .specfun import BesselDomainError, log_bessel_k

__version__ = "0.1.0"

__all__ = [
    "BesselDomainError",
    "ComponentParams",
    "ContingencyTable",
    "FitResult",
    "GibbsConfig",
    "GigParams",
    "MixtureSpec",
    "NotPositiveDefiniteError",
    "PosteriorDraws",
    "RunDiagnostics",
    "adjusted_rand_index",
    "credible_intervals",
    "cross_tab",
    "estimate_params",
    "fit",
    "generate",
    "gig_expectations",
    "load_spec",
    "log_bessel_k",
    "map_allocation",
    "mnig_logpdf",
    "mnig_mean_cov",
    "psrf",
    "run",
    "sample_mnig",
    "sim1_spec",
    "sim2_spec",
]
