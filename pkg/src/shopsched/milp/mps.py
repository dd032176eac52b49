"""Fixed-format MPS writer and solution-file parser.

Written subset (everything the models here need, nothing more):

* sections ``NAME``, ``ROWS``, ``COLUMNS``, ``RHS``, ``BOUNDS``, ``ENDATA``;
* deterministic names: the objective row is ``OBJ``, constraint row k is
  ``R%07d`` (1-based), column j is ``C%07d`` (1-based), in model order;
* integer columns wrapped in the classic ``'MARKER' 'INTORG'/'INTEND'``
  lines; every row gets exactly one RHS entry; every column gets explicit
  ``LO``/``UP`` bound lines; values printed with %.17g (float round-trip).

Solution-file grammar (one solver answer):

* first meaningful line ``status <optimal|feasible|infeasible|time_limit>``;
* optional ``objective <float>`` and ``bound <float>`` lines;
* then one ``<column> <value>`` pair per line for every column (may be
  omitted entirely for answers without an incumbent);
* blank lines and ``#`` comments ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .model import EQ, GE, LE, MilpModel, MilpSolution, SolveStatus

_SENSE_TO_TAG = {LE: "L", GE: "G", EQ: "E"}
_TAG_TO_SENSE = {v: k for k, v in _SENSE_TO_TAG.items()}


class SolutionFormatError(ValueError):
    """Raised when a solution file does not follow the documented grammar."""


def col_name(j: int) -> str:
    return f"C{j + 1:07d}"


def row_name(k: int) -> str:
    return f"R{k + 1:07d}"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_mps(model: MilpModel, path: Union[str, Path], name: str = "SHOPSCHED") -> str:
    path = Path(path)
    lines = [f"NAME          {name}", "ROWS", " N  OBJ"]
    for k, row in enumerate(model.rows):
        lines.append(f" {_SENSE_TO_TAG[row.sense]}  {row_name(k)}")

    entries: list[list[tuple[str, float]]] = [[] for _ in range(model.n_vars)]
    for j, c in sorted(model.objective.items()):
        entries[j].append(("OBJ", c))
    for k, row in enumerate(model.rows):
        for j, c in sorted(row.coefs.items()):
            entries[j].append((row_name(k), c))

    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.n_vars):
        if model.integer[j] != in_int:
            tag = "INTORG" if model.integer[j] else "INTEND"
            lines.append(f"    MARKER{marker:04d}  'MARKER'                 '{tag}'")
            in_int = model.integer[j]
            marker += 1
        pairs = entries[j] or [("OBJ", 0.0)]
        for first in range(0, len(pairs), 2):
            chunk = pairs[first : first + 2]
            parts = "   ".join(f"{r:<10s}{_fmt(c):>20s}" for r, c in chunk)
            lines.append(f"    {col_name(j):<10s}{parts}")
    if in_int:
        lines.append(f"    MARKER{marker:04d}  'MARKER'                 'INTEND'")

    lines.append("RHS")
    for k, row in enumerate(model.rows):
        lines.append(f"    RHS       {row_name(k):<10s}{_fmt(row.rhs):>20s}")

    lines.append("BOUNDS")
    for j in range(model.n_vars):
        lines.append(f" LO BND       {col_name(j):<10s}{_fmt(model.lb[j]):>20s}")
        lines.append(f" UP BND       {col_name(j):<10s}{_fmt(model.ub[j]):>20s}")
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


@dataclass
class ParsedMps:
    """Raw MPS content: enough to hand to any LP/MILP backend."""

    name: str = ""
    col_names: list[str] = field(default_factory=list)
    col_index: dict[str, int] = field(default_factory=dict)
    integer: list[bool] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    row_names: list[str] = field(default_factory=list)
    senses: list[str] = field(default_factory=list)
    rows: list[dict[int, float]] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)


def read_mps(path: Union[str, Path]) -> ParsedMps:
    out = ParsedMps()
    row_index: dict[str, int] = {}
    section = None
    in_int = False
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" ") and not raw.startswith("\t"):
            head = raw.split()
            section = head[0].upper()
            if section == "NAME" and len(head) > 1:
                out.name = head[1]
            if section == "ENDATA":
                break
            continue
        tok = raw.split()
        if section == "ROWS":
            tag, rname = tok[0].upper(), tok[1]
            if tag == "N":
                continue  # objective row
            if tag not in _TAG_TO_SENSE:
                raise SolutionFormatError(f"{path}:{lineno}: unknown row sense {tag!r}")
            row_index[rname] = len(out.row_names)
            out.row_names.append(rname)
            out.senses.append(_TAG_TO_SENSE[tag])
            out.rows.append({})
            out.rhs.append(0.0)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            cname = tok[0]
            if cname not in out.col_index:
                out.col_index[cname] = len(out.col_names)
                out.col_names.append(cname)
                out.integer.append(in_int)
                out.lb.append(0.0)
                out.ub.append(math.inf)
            j = out.col_index[cname]
            for rname, val in zip(tok[1::2], tok[2::2]):
                if rname == "OBJ":
                    out.objective[j] = out.objective.get(j, 0.0) + float(val)
                else:
                    out.rows[row_index[rname]][j] = float(val)
        elif section == "RHS":
            for rname, val in zip(tok[1::2], tok[2::2]):
                out.rhs[row_index[rname]] = float(val)
        elif section == "BOUNDS":
            tag, _, cname, val = tok[0].upper(), tok[1], tok[2], float(tok[3])
            j = out.col_index[cname]
            if tag == "LO":
                out.lb[j] = val
            elif tag == "UP":
                out.ub[j] = val
            elif tag == "FX":
                out.lb[j] = out.ub[j] = val
            elif tag == "BV":
                out.lb[j], out.ub[j] = 0.0, 1.0
            else:
                raise SolutionFormatError(f"{path}:{lineno}: unsupported bound tag {tag!r}")
    return out


_STATUS_WORDS = {
    "optimal": SolveStatus.OPTIMAL,
    "feasible": SolveStatus.FEASIBLE,
    "infeasible": SolveStatus.INFEASIBLE,
    "time_limit": SolveStatus.TIME_LIMIT,
}


def write_solution(
    path: Union[str, Path],
    status: str,
    col_names: list[str],
    values: np.ndarray | None,
    objective: float | None = None,
    bound: float | None = None,
) -> None:
    lines = [f"status {status}"]
    if objective is not None and math.isfinite(objective):
        lines.append(f"objective {_fmt(objective)}")
    if bound is not None and math.isfinite(bound):
        lines.append(f"bound {_fmt(bound)}")
    if values is not None:
        for name, v in zip(col_names, values):
            lines.append(f"{name} {_fmt(float(v))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_external_solution(path: Union[str, Path], model: MilpModel) -> MilpSolution:
    """Read a solution file back against the model it answers.

    Column names follow the deterministic writer naming. Every column must
    be present when the answer carries an incumbent; a missing or unknown
    column is an error naming it.
    """
    path = Path(path)
    status: SolveStatus | None = None
    objective: float | None = None
    bound: float | None = None
    seen: dict[int, float] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if status is None:
            if tok[0].lower() != "status" or len(tok) != 2:
                raise SolutionFormatError(f"{path}:{lineno}: expected 'status <word>' header")
            word = tok[1].lower()
            if word not in _STATUS_WORDS:
                raise SolutionFormatError(f"{path}:{lineno}: unknown status {word!r}")
            status = _STATUS_WORDS[word]
            continue
        if tok[0].lower() in ("objective", "bound"):
            if len(tok) != 2:
                raise SolutionFormatError(f"{path}:{lineno}: malformed {tok[0]} line")
            try:
                val = float(tok[1])
            except ValueError as exc:
                raise SolutionFormatError(f"{path}:{lineno}: bad number {tok[1]!r}") from exc
            if tok[0].lower() == "objective":
                objective = val
            else:
                bound = val
            continue
        if len(tok) != 2:
            raise SolutionFormatError(f"{path}:{lineno}: expected '<column> <value>'")
        name = tok[0]
        if not name.startswith("C"):
            raise SolutionFormatError(f"{path}:{lineno}: unknown column {name!r}")
        try:
            j = int(name[1:]) - 1
        except ValueError as exc:
            raise SolutionFormatError(f"{path}:{lineno}: unknown column {name!r}") from exc
        if not (0 <= j < model.n_vars):
            raise SolutionFormatError(f"{path}:{lineno}: column {name} outside model (n={model.n_vars})")
        try:
            seen[j] = float(tok[1])
        except ValueError as exc:
            raise SolutionFormatError(f"{path}:{lineno}: bad number {tok[1]!r} for column {name}") from exc

    if status is None:
        raise SolutionFormatError(f"{path}: empty solution file")

    values: np.ndarray | None = None
    if seen:
        missing = [col_name(j) for j in range(model.n_vars) if j not in seen]
        if missing:
            raise SolutionFormatError(
                f"{path}: no value for column {missing[0]}"
                + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else "")
            )
        values = np.zeros(model.n_vars)
        for j, v in seen.items():
            values[j] = v
        objective = model.objective_value(values)
    if objective is None:
        objective = math.inf
    if bound is None:
        bound = objective if status is SolveStatus.OPTIMAL else -math.inf
    return MilpSolution(status, values, objective, bound)
