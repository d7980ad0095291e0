"""Electromagnetic navigation control stack.

Library for magnetically actuated pendulum experiments: synthetic coil-array
models, torque/field current allocation, LQRI stabilization, closed-loop
simulation, and feasibility-margin workspace analysis.
"""

__version__ = "0.1.0"

from .magmodel import (
    ActuationModel,
    CoilSpec,
    DipoleAgent,
    FieldState,
    WrenchMaps,
    actuation_matrix,
    field_and_gradient,
    get_model,
    torque_map_svd,
    wrench_maps,
)
from .dynamics import PendulumParams, PendulumState, LinearSystem
from .alloc import (
    AllocationResult,
    FieldCommand,
    RankDeficiencyError,
    WrenchTask,
    allocate_field_alignment,
    allocate_multi_field,
    allocate_multi_torque,
    allocate_torque_one_step,
    allocate_torque_two_step,
    zeta_star,
)
from .control import (
    ControllerConfig,
    IntegralSchedule,
    LqriController,
    SynthesisError,
    VelocityEstimator,
    estimate_velocities,
    lqr_gain,
)
from .sim import (
    AgentSetup,
    DisturbanceEvent,
    EmnsConfig,
    Scenario,
    SetpointSpec,
    SimTrace,
    run_multi_agent,
    run_scenario,
    scenario_from_dict,
)
from .workspace import (
    FeasibilityMap,
    GridSpec,
    TaskSet,
    feasibility_margin_field,
    feasibility_margin_torque,
    max_feasible_standoff,
    workspace_map,
)

__all__ = [
    "AgentSetup",
    "DisturbanceEvent",
    "EmnsConfig",
    "Scenario",
    "SetpointSpec",
    "SimTrace",
    "run_multi_agent",
    "run_scenario",
    "scenario_from_dict",
    "FeasibilityMap",
    "GridSpec",
    "TaskSet",
    "feasibility_margin_field",
    "feasibility_margin_torque",
    "max_feasible_standoff",
    "workspace_map",
    "AllocationResult",
    "FieldCommand",
    "RankDeficiencyError",
    "WrenchTask",
    "allocate_field_alignment",
    "allocate_multi_field",
    "allocate_multi_torque",
    "allocate_torque_one_step",
    "allocate_torque_two_step",
    "zeta_star",
    "ControllerConfig",
    "IntegralSchedule",
    "LqriController",
    "SynthesisError",
    "VelocityEstimator",
    "estimate_velocities",
    "lqr_gain",
    "ActuationModel",
    "CoilSpec",
    "DipoleAgent",
    "FieldState",
    "WrenchMaps",
    "actuation_matrix",
    "field_and_gradient",
    "get_model",
    "torque_map_svd",
    "wrench_maps",
    "PendulumParams",
    "PendulumState",
    "LinearSystem",
    "__version__",
]
