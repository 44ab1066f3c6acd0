"""Pre-computing Metropolis-Hastings for Gibbs random fields."""

from .chains import (
    Box,
    ChainTrace,
    LogScale,
    RandomWalk,
    Target,
    abc_mcmc_precomp,
    exchange,
    mh_exact,
    noisy_mh,
    precomp_metropolis,
)
from .diagnostics import ess, estimator_moments, tv_occupation
from .estimators import direct_path, full_path, one_pivot
from .grid import Grid, build_grid, estimate_gradient, estimate_hessian, find_mode
from .kernels import BACKEND
from .models import GrfModel, exact_log_z, sample_aux, suff_stats
from .precompute import PrecompData, load, nearest_grid_point, run_precompute, save
from .priors import parse_prior

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Box",
    "ChainTrace",
    "Grid",
    "GrfModel",
    "LogScale",
    "PrecompData",
    "RandomWalk",
    "Target",
    "abc_mcmc_precomp",
    "build_grid",
    "direct_path",
    "estimate_gradient",
    "estimate_hessian",
    "estimator_moments",
    "ess",
    "exact_log_z",
    "exchange",
    "find_mode",
    "full_path",
    "load",
    "mh_exact",
    "nearest_grid_point",
    "noisy_mh",
    "one_pivot",
    "parse_prior",
    "precomp_metropolis",
    "run_precompute",
    "sample_aux",
    "save",
    "suff_stats",
    "tv_occupation",
]
