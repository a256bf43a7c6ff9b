"""Stochastic ADMM with variance reduction for nonconvex composite problems."""

from .estimators import EstimatorKind
from .engine import QMode, RunTrace, SolverConfig, run
from .model import ConstraintSpec, ProblemSpec, Regularizer, SmoothSum

__version__ = "0.1.0"

__all__ = [
    "EstimatorKind",
    "QMode",
    "RunTrace",
    "SolverConfig",
    "run",
    "ConstraintSpec",
    "ProblemSpec",
    "Regularizer",
    "SmoothSum",
]
