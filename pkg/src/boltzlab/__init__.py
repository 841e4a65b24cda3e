"""Deterministic solver and verification suite for a cutoff kinetic model.

The package is organised around six layers:

``phase``
    velocity/space lattices, distribution containers, norms, moments.
``collision``
    binary collision operator, quadrature rules, conservation checks.
``linearized``
    linearized operator, screened splitting, kernel envelope verifiers.
``evolve``
    windowed monotone iteration for the mild-form evolution.
``analysis``
    continuation certificates, entropy/decay diagnostics, exponent checks.
``cli``
    command line front end (``certify``, ``run``, ``verify``, ``decay``).
"""

from __future__ import annotations

from .collision import CollisionOperator, KernelParams, SphereQuadrature
from .evolve import DiagnosticsSeries, SolverAbort, StepConfig, run
from .phase import DistributionField, SpatialGrid, VelocityGrid

__version__ = "0.1.0"

__all__ = [
    "CollisionOperator",
    "DiagnosticsSeries",
    "DistributionField",
    "KernelParams",
    "SolverAbort",
    "SpatialGrid",
    "SphereQuadrature",
    "StepConfig",
    "VelocityGrid",
    "run",
    "__version__",
]
