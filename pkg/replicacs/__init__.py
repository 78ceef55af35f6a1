"""
replicacs - Replica predictions for regularized least-squares compressive sensing
RS and one-step RSB fixed-point solvers with Monte Carlo validation

Public API:
    - solve_rs: Replica-symmetric fixed point (χ, q) and its distortion
    - solve_1rsb: One-step RSB fixed point (χ, q, p, μ) and its distortion
    - run_sim: Trial-averaged empirical distortion of a finite sampling system
    - reconstruct: Regularized least-squares estimate for one (A, y)

Domain Types:
    - EnsembleSpec: Random-matrix ensemble (iid, projector, tabulated spectrum)
    - PenaltySpec: Scalar penalty (l2, l1, l0, custom)
    - SourcePrior: Sparse-Gaussian source
    - SystemConfig: Everything a prediction depends on
    - RsOptions / RsbOptions: Solver settings
    - RsSolution / RsbSolution: Solver results with status
    - SimConfig / SimReport: Monte Carlo configuration and result
    - RunConfig: JSON config file schema

Building Blocks:
    - r_transform: R-transform of an ensemble
    - empirical_r_transform: R-transform of a finite eigenvalue sample
    - r_integral: ∫R(-ϱ/λ)dϱ between two limits
    - prox: Scalar proximal operator (decoupled estimator)
    - rsb_minimize: Scalar minimization inside the 1RSB tilted measure
    - QuadratureRule: Gaussian quadrature with breakpoints
    - mu_residual / solve_mu: Parisi-parameter equation and its root

Sweeps and I/O:
    - predict: All solver rows for one point
    - minimize_lambda: Row at the λ minimizing the distortion
    - run_sweep: λ or rate sweep from a config
    - load_config: Validated RunConfig from a JSON file
    - write_prediction_csv: Plot-ready CSV of prediction rows
"""

from .__version__ import __version__
from .ensemble import empirical_r_transform, r_integral, r_transform
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    InvalidNegativeDiscriminant,
    MuRootNotBracketed,
    NoMinimizerError,
    NonFiniteError,
    ReplicaError,
    SizeError,
    StateError,
)
from .models import (
    ChannelParams,
    EnsembleSpec,
    PenaltySpec,
    PredictionRow,
    RsbOptions,
    RsbSolution,
    RsOptions,
    RsSolution,
    RunConfig,
    SimConfig,
    SimReport,
    SourcePrior,
    SweepSpec,
    SystemConfig,
)
from .quadrature import QuadratureRule, gauss_expect, gauss_expect_2d
from .rs_solver import rs_distortion, rs_iterate, solve_rs
from .rsb_solver import mu_residual, rsb_distortion, rsb_iterate, solve_1rsb, solve_mu
from .scalar_channel import prox, rsb_minimize
from .simulate import reconstruct, run_sim
from .sweep import minimize_lambda, predict, run_sweep
from .utils import load_config, write_prediction_csv

__all__ = [
    "__version__",
    # Solvers
    "solve_rs",
    "solve_1rsb",
    "rs_iterate",
    "rsb_iterate",
    "rs_distortion",
    "rsb_distortion",
    "mu_residual",
    "solve_mu",
    # Simulation
    "run_sim",
    "reconstruct",
    # Domain types
    "EnsembleSpec",
    "PenaltySpec",
    "SourcePrior",
    "SystemConfig",
    "ChannelParams",
    "RsOptions",
    "RsbOptions",
    "RsSolution",
    "RsbSolution",
    "SimConfig",
    "SimReport",
    "SweepSpec",
    "RunConfig",
    "PredictionRow",
    # Building blocks
    "r_transform",
    "empirical_r_transform",
    "r_integral",
    "prox",
    "rsb_minimize",
    "QuadratureRule",
    "gauss_expect",
    "gauss_expect_2d",
    # Sweeps and I/O
    "predict",
    "minimize_lambda",
    "run_sweep",
    "load_config",
    "write_prediction_csv",
    # Errors
    "ReplicaError",
    "DomainError",
    "ConvergenceError",
    "NoMinimizerError",
    "NonFiniteError",
    "StateError",
    "SizeError",
    "ConfigError",
    "InvalidNegativeDiscriminant",
    "MuRootNotBracketed",
]
