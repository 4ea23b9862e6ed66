"""Simulation and predictive inference for log-Gaussian Cox processes on a lattice."""

from .covariance import CovarianceModel, FieldState, NeedLargerExtension, WhiteNoiseState, cov_base, sample_field, whiten
from .gaussian_approx import GaussianApproxConfig, ModeResult, find_mode, gaussian_approximation, gaussian_quantiles, marginal_sd
from .gmrf_fit import (
    FitConfig,
    FitResult,
    NeighbourhoodTheta,
    approximation_mse,
    fit,
    gradient_U,
    implied_cov_base,
    objective_U,
    precision_base,
)
from .grid_fft import (
    CirculantBase,
    GridSpec,
    InvalidBase,
    NotPositiveDefinite,
    Spectrum,
    inv_matvec,
    inv_sqrt_matvec,
    matvec,
    spectrum,
    sqrt_matvec,
    toral_distance,
)
from .lgcp_model import CellCounts, IntensitySurface, Scenario, build_lambda, grad_log_target, log_target, simulate_scenario
from .mala import Q_LADDER, ChainConfig, ChainOutput, QuantileSummary, accept_prob, adapt_h, propose, quantiles, run_chain

__version__ = "0.1.0"
