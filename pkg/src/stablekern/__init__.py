"""Numerical engine for heat kernels of non-symmetric stable-like operators.

Builds the transition density by a frozen-coefficient correction series,
checks the two-sided envelope bounds, gradient bounds and semigroup
identities against closed-form and Monte Carlo oracles.
"""

from .model import (
    ModelSpec,
    RhoWeight,
    ValidationLattice,
    eval_rho,
    make_preset_spec,
    preset_names,
    validate_model,
    verify_rho_inequalities,
)
from .report import BoundReport, RunReport, ValidationReport

__all__ = [
    "ModelSpec",
    "RhoWeight",
    "ValidationLattice",
    "eval_rho",
    "make_preset_spec",
    "preset_names",
    "validate_model",
    "verify_rho_inequalities",
    "BoundReport",
    "RunReport",
    "ValidationReport",
]

__version__ = "0.1.0"
