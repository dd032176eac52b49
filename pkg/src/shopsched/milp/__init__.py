"""Generic MILP layer: model container, exact solvers, LP feasibility,
MPS/solution-file interchange, and solver backends."""

from .backend import BuiltinBackend, ExternalBackend, SolverBackend, default_external_command, make_backend
from .lp import LpFeasibility, solve_lp_feasibility
from .model import (
    EQ,
    FEAS_TOL,
    GE,
    INT_TOL,
    LE,
    OPT_GAP_TOL,
    MilpModel,
    MilpSolution,
    Row,
    SolveStatus,
    check_solution,
)
from .mps import ParsedMps, SolutionFormatError, parse_external_solution, read_mps, write_mps, write_solution
from .solve import ENUMERATION_CAP, ModelStructureError, enumerate_all, solve_builtin

__all__ = [
    "BuiltinBackend",
    "ExternalBackend",
    "SolverBackend",
    "default_external_command",
    "make_backend",
    "LpFeasibility",
    "solve_lp_feasibility",
    "EQ",
    "GE",
    "LE",
    "FEAS_TOL",
    "INT_TOL",
    "OPT_GAP_TOL",
    "MilpModel",
    "MilpSolution",
    "Row",
    "SolveStatus",
    "check_solution",
    "ParsedMps",
    "SolutionFormatError",
    "parse_external_solution",
    "read_mps",
    "write_mps",
    "write_solution",
    "ENUMERATION_CAP",
    "ModelStructureError",
    "enumerate_all",
    "solve_builtin",
]
