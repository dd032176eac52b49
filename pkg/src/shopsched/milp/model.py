"""Generic bounded-variable mixed-integer linear model and solution records.

A model is a plain container: variables with finite bounds and integrality
flags, linear rows, a linear minimization objective, and SOS1 groups (sets
of binaries of which exactly one must be 1; every group also carries an
explicit sum-to-one row so the model stands alone as an ordinary MILP).
Models are built once and treated as immutable afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

LE = "<="
GE = ">="
EQ = "=="

# House-wide numeric tolerances (one table, used everywhere).
FEAS_TOL = 1e-6        # row/bound satisfaction
OPT_GAP_TOL = 1e-9     # absolute optimality-gap closure in branch and bound
INT_TOL = 1e-6         # integrality check


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TIME_LIMIT = "time_limit"


@dataclass
class Row:
    coefs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    """Minimization MILP with explicit SOS1 structure."""

    var_names: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    integer: list[bool] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    sos1_groups: list[list[int]] = field(default_factory=list)
    sos1_names: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def add_var(self, name: str, lb: float, ub: float, integer: bool = False, obj: float = 0.0) -> int:
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"variable {name}: bounds must be finite, got [{lb}, {ub}]")
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(integer))
        if obj:
            self.objective[idx] = float(obj)
        return idx

    def add_binary(self, name: str, obj: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, integer=True, obj=obj)

    def add_row(self, coefs: dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad row sense {sense!r}")
        self.rows.append(Row(dict(coefs), sense, float(rhs), name))
        return len(self.rows) - 1

    def add_sos1(self, members: list[int], name: str = "") -> int:
        """Register a one-of set; also writes the explicit sum-to-one row."""
        if not members:
            raise ValueError("empty SOS1 group")
        for v in members:
            if not self.integer[v] or self.lb[v] != 0.0 or self.ub[v] != 1.0:
                raise ValueError(f"SOS1 member {self.var_names[v]} is not a binary")
        self.sos1_groups.append(list(members))
        self.sos1_names.append(name)
        self.add_row({v: 1.0 for v in members}, EQ, 1.0, name=f"sos_{name}" if name else "")
        return len(self.sos1_groups) - 1

    def set_objective_coef(self, var: int, coef: float) -> None:
        if coef:
            self.objective[var] = float(coef)
        else:
            self.objective.pop(var, None)

    def objective_value(self, values: np.ndarray) -> float:
        return float(sum(c * values[v] for v, c in self.objective.items()))

    def row_activity(self, row: Row, values: np.ndarray) -> float:
        return float(sum(c * values[v] for v, c in row.coefs.items()))


@dataclass
class MilpSolution:
    status: SolveStatus
    values: np.ndarray | None
    objective: float
    bound: float
    wall_time: float = 0.0
    nodes: int = 0
    message: str = ""

    @property
    def is_feasible(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE, SolveStatus.TIME_LIMIT) and self.values is not None


def check_solution(model: MilpModel, values: np.ndarray, tol: float = FEAS_TOL) -> list[str]:
    """Independent re-check of a variable assignment against the full model.

    Returns one message per violated bound, integrality flag, row, or SOS1
    group. Deliberately does no clever math so it can vet the solvers.
    """
    problems: list[str] = []
    if len(values) != model.n_vars:
        return [f"value vector has {len(values)} entries, model has {model.n_vars}"]
    for v in range(model.n_vars):
        x = float(values[v])
        if x < model.lb[v] - tol or x > model.ub[v] + tol:
            problems.append(f"bound: {model.var_names[v]} = {x} outside [{model.lb[v]}, {model.ub[v]}]")
        if model.integer[v] and abs(x - round(x)) > INT_TOL:
            problems.append(f"integrality: {model.var_names[v]} = {x}")
    for k, row in enumerate(model.rows):
        act = model.row_activity(row, values)
        label = row.name or f"row[{k}]"
        if row.sense == LE and act > row.rhs + tol:
            problems.append(f"row {label}: {act} <= {row.rhs} violated")
        elif row.sense == GE and act < row.rhs - tol:
            problems.append(f"row {label}: {act} >= {row.rhs} violated")
        elif row.sense == EQ and abs(act - row.rhs) > tol:
            problems.append(f"row {label}: {act} == {row.rhs} violated")
    for k, group in enumerate(model.sos1_groups):
        ones = [v for v in group if values[v] > 0.5]
        if len(ones) != 1:
            label = model.sos1_names[k] or f"sos1[{k}]"
            problems.append(f"sos1 {label}: {len(ones)} members set")
    return problems
