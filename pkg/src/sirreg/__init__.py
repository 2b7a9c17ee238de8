"""Sliced inverse regression with ridge and regularized criteria.

The ridge criterion is degenerate for any positive tau (no minimizer, or a
zero basis); :mod:`sirreg.ridge_als` demonstrates this. The regularized
estimator in :mod:`sirreg.rsir` is the well-posed alternative.
"""

from .criteria import (
    eval_G,
    eval_G_tau,
    eval_H_tau,
    eval_H_tau_shifted,
    grad_G_tau,
    key_identity_residual,
    vec_kron_check,
)
from .evalsim import Link, SimSpec, simulate, subspace_distance
from .exceptions import InfeasibleError, InputError, NumericalError, SirError
from .moments import Dataset, compute_sliced_moments, read_csv, slice_by_response, sliced_moments
from .ridge_als import AlsConfig, als_step, check_existence, construct_counterexample, run_als
from .rsir import fit_rsir, fit_sir, profile_H, select_tau_cv

__version__ = "0.1.0"

__all__ = [
    "AlsConfig", "Dataset", "InfeasibleError", "InputError", "Link", "NumericalError",
    "SimSpec", "SirError", "als_step", "check_existence", "compute_sliced_moments",
    "construct_counterexample", "eval_G", "eval_G_tau", "eval_H_tau", "eval_H_tau_shifted",
    "fit_rsir", "fit_sir", "grad_G_tau", "key_identity_residual", "profile_H", "read_csv",
    "run_als", "select_tau_cv", "simulate", "slice_by_response", "sliced_moments",
    "subspace_distance", "vec_kron_check",
]
