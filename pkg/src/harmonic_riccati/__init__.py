"""Harmonic-coupled Riccati equations for consensus-on-information filtering."""

from .errors import ConvergenceError, MonotonicityError, PreconditionError, UnstableError
from .hcre import (
    SolveReport,
    classical_bound_demo,
    contraction_certificate,
    hcre_step,
    monotone_solve,
    solve_fixed_point,
    verify_uniqueness,
)
from .model import (
    FusionWeights,
    SystemModel,
    Topology,
    cmci_weights,
    degree_normalized_weights,
    icf_weights,
    metropolis_weights,
    random_geometric_topology,
    system_model,
    validate,
)
from .steady import build_error_operators, fused_posterior, schur_certificate, steady_covariance

__version__ = "0.1.0"
