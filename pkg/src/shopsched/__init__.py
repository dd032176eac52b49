"""Stochastic job-shop scheduling under scrap and rework.

A time-indexed expected-tardiness formulation, a Lagrangian decomposition
solver with level-controlled step sizes, schedule repair, and independent
simulation-based validation of the expectation semantics.
"""

__version__ = "0.1.0"

from .instance import (
    Instance,
    Job,
    MachineGroup,
    OperationSpec,
    ScenarioKey,
    ScenarioKind,
    ScenarioWeight,
    generate_instance,
    load_instance,
    save_instance,
    scenario_weights,
    validate_instance,
)
from .schedule import Placement, Schedule, greedy_schedule
from .formulation import (
    VariableLayout,
    build_full_model,
    build_repair_model,
    build_subproblem_model,
    evaluate_objective,
)
from .feasibility import GapReport, check_feasible, compute_gap, repair_schedule
from .dual import DualState, Engine, HyperParams, SolveReport, solve
from .simulate import exact_expected_tardiness, monte_carlo_tardiness

__all__ = [
    "__version__",
    "Instance",
    "Job",
    "MachineGroup",
    "OperationSpec",
    "ScenarioKey",
    "ScenarioKind",
    "ScenarioWeight",
    "generate_instance",
    "load_instance",
    "save_instance",
    "scenario_weights",
    "validate_instance",
    "Placement",
    "Schedule",
    "greedy_schedule",
    "VariableLayout",
    "build_full_model",
    "build_repair_model",
    "build_subproblem_model",
    "evaluate_objective",
    "GapReport",
    "check_feasible",
    "compute_gap",
    "repair_schedule",
    "DualState",
    "Engine",
    "HyperParams",
    "SolveReport",
    "solve",
    "exact_expected_tardiness",
    "monte_carlo_tardiness",
]
