"""Regularized entropy moment closures for slab-geometry kinetic transport.

The package bundles the closure mathematics (dual Newton solvers with
partial regularization), a training-data sampler, small input-convex
neural surrogates trained in-process, and a 1D finite-volume transport
solver that compares P_N, S_N, Newton-M_N, and network-M_N closures.
"""

__version__ = "0.1.0"

from .entropy_core import (
    ClosureConfig,
    ClosureSolution,
    NewtonSettings,
    solve_moment_closure,
    solve_reduced,
)
from .moment_basis import evaluate_basis, fruncate, normalize
from .quadrature import QuadratureRule, build_rule, integrate
from .sampler import SamplerConfig, generate, read_dataset, write_dataset
from .surrogate import TrainSettings, infer, load_closure, save_closure, train
from .kinetic_solver import run_case, e_rel

__all__ = [
    "__version__",
    "QuadratureRule",
    "build_rule",
    "integrate",
    "evaluate_basis",
    "normalize",
    "fruncate",
    "ClosureConfig",
    "ClosureSolution",
    "NewtonSettings",
    "solve_reduced",
    "solve_moment_closure",
    "SamplerConfig",
    "generate",
    "write_dataset",
    "read_dataset",
    "TrainSettings",
    "train",
    "infer",
    "save_closure",
    "load_closure",
    "run_case",
    "e_rel",
]
