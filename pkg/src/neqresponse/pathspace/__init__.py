"""Trajectory sampling, Girsanov reweighting, and Monte Carlo estimators."""

from .backend import active_backend, available_backends, get_kernels, set_backend
from .estimators import (
    BatchResult,
    JumpMeasureReport,
    McEstimate,
    final_states_inhomogeneous,
    jump_measure_identity_check,
    mc_response,
    run_batch,
    sample_log_densities,
    sample_states_at,
)
from .girsanov import girsanov_log_density, girsanov_log_density_linear
from .rng import RngStream, stream_bit_generators
from .sampling import sample_path, sample_path_inhomogeneous, thinning_bound
from .trajectory import Trajectory, occupation_measure

__all__ = [
    "BatchResult",
    "JumpMeasureReport",
    "McEstimate",
    "RngStream",
    "Trajectory",
    "active_backend",
    "available_backends",
    "final_states_inhomogeneous",
    "get_kernels",
    "girsanov_log_density",
    "girsanov_log_density_linear",
    "jump_measure_identity_check",
    "mc_response",
    "occupation_measure",
    "run_batch",
    "sample_log_densities",
    "sample_path",
    "sample_path_inhomogeneous",
    "sample_states_at",
    "set_backend",
    "stream_bit_generators",
    "thinning_bound",
]
