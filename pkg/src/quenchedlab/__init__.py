"""Quenched statistical laws for random piecewise expanding interval maps, checked numerically."""
from .acim import (
    EquivariantDensity,
    cone_contraction_check,
    equivariance_residual,
    minoration_estimate,
    solve_equivariant,
)
from .driving import BaseSpec, OmegaPath, sample_path, shift
from .experiment import ExperimentConfig, load_config, run_experiment
from .limits import asip_error_scaling, birkhoff_samples, clt_test, coboundary_test
from .maps import MapFamily, PiecewiseMap, doubling, family_constants, tripling
from .martingale import (
    center_observable,
    conditional_expectation,
    decompose,
    martingale_residual,
    sprindzuk_diagnostic,
)
from .spaces import ConeParams, GridFunction, cone_contains, hilbert_metric, norms
from .stats import Observable, correlations, fiberwise_variance, fit_decay, green_kubo_sigma2
from .transfer import Cocycle, apply, build_backend, cocycle_apply, duality_residual

__version__ = "0.1.0"

__all__ = [
    "BaseSpec",
    "Cocycle",
    "ConeParams",
    "EquivariantDensity",
    "ExperimentConfig",
    "GridFunction",
    "MapFamily",
    "Observable",
    "OmegaPath",
    "PiecewiseMap",
    "apply",
    "asip_error_scaling",
    "birkhoff_samples",
    "build_backend",
    "center_observable",
    "clt_test",
    "coboundary_test",
    "cocycle_apply",
    "conditional_expectation",
    "cone_contains",
    "cone_contraction_check",
    "correlations",
    "decompose",
    "doubling",
    "duality_residual",
    "equivariance_residual",
    "family_constants",
    "fiberwise_variance",
    "fit_decay",
    "green_kubo_sigma2",
    "hilbert_metric",
    "load_config",
    "martingale_residual",
    "minoration_estimate",
    "norms",
    "run_experiment",
    "sample_path",
    "shift",
    "solve_equivariant",
    "sprindzuk_diagnostic",
    "tripling",
]
