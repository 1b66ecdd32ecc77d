"""Linear response and dynamical fluctuations for finite-state Markov
jump processes out of equilibrium.

Exact response kernels for potential perturbations of the (a, b) family,
their equilibrium and stationary special cases, Girsanov path-weight
Monte Carlo estimators, stationary susceptibility reciprocity, and the
occupation-measure rate functional as a finite convex program.
"""

__version__ = "0.1.0"

from . import fluctuations, markov, models, pathspace, perturbation, response
from .errors import NeqResponseError, NumericalError, ValidationError
from .markov import (
    Distribution,
    Generator,
    Observable,
    StateSpace,
    apply_L,
    build_generator,
    check_detailed_balance,
    correlation,
    correlation_derivatives,
    propagate,
    semigroup_apply,
    stationary_distribution,
)
from .perturbation import AmplitudeSchedule, PerturbationSpec, perturbed_generator
from .pathspace import RngStream, sample_path

__all__ = [
    "AmplitudeSchedule",
    "Distribution",
    "Generator",
    "NeqResponseError",
    "NumericalError",
    "Observable",
    "PerturbationSpec",
    "RngStream",
    "StateSpace",
    "ValidationError",
    "apply_L",
    "build_generator",
    "check_detailed_balance",
    "correlation",
    "correlation_derivatives",
    "fluctuations",
    "markov",
    "models",
    "pathspace",
    "perturbation",
    "perturbed_generator",
    "propagate",
    "response",
    "sample_path",
    "semigroup_apply",
    "stationary_distribution",
]
