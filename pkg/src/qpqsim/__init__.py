"""Simulator and analysis toolkit for a flexible QKD-based quantum
private query protocol: honest sessions, parameter planning, attack
bounds, and a framed wire mode."""

from ._kernels import active_backend
from .planner import (
    PlanResult,
    conclusive_probability,
    expected_known_bits,
    failure_probability,
    plan_min_k,
    solve_theta,
    table_generator,
)
from .protocol import (
    FinalKey,
    QueryExchange,
    RawKey,
    SessionConfig,
    SessionReport,
    estimate_error_rate,
    oblivious_query,
    run_key_distribution,
    run_session,
    sift,
    xor_compress,
)
from .qubits import (
    AttackLabel,
    Basis,
    CarrierLabel,
    DensityMatrix,
    StateVector,
    attack_state,
    carrier_state,
    fidelity,
    measure,
    tensor,
    trace_distance,
)

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "AttackLabel",
    "Basis",
    "CarrierLabel",
    "DensityMatrix",
    "FinalKey",
    "PlanResult",
    "QueryExchange",
    "RawKey",
    "SessionConfig",
    "SessionReport",
    "StateVector",
    "attack_state",
    "carrier_state",
    "conclusive_probability",
    "estimate_error_rate",
    "expected_known_bits",
    "failure_probability",
    "fidelity",
    "measure",
    "oblivious_query",
    "plan_min_k",
    "run_key_distribution",
    "run_session",
    "sift",
    "solve_theta",
    "table_generator",
    "tensor",
    "trace_distance",
    "xor_compress",
    "__version__",
]
