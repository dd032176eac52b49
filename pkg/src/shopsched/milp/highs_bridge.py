"""MPS-in, solution-out MILP solving on top of scipy's HiGHS interface.

Reads the MPS subset written by :mod:`shopsched.milp.mps`, solves, and
writes the documented solution grammar. Serves as the default external
solver command so the process-adapter path is exercised end to end:

    python -m shopsched.milp.highs_bridge MODEL.mps OUT.sol --time-limit 60
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

from .mps import ParsedMps, read_mps, write_solution


def _constraints(parsed: ParsedMps, n: int) -> LinearConstraint | None:
    m = len(parsed.rows)
    if m == 0:
        return None
    data, ri, ci = [], [], []
    for k, row in enumerate(parsed.rows):
        for j, c in row.items():
            ri.append(k)
            ci.append(j)
            data.append(c)
    A = sp.csr_matrix((data, (ri, ci)), shape=(m, n))
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for k, sense in enumerate(parsed.senses):
        if sense in ("<=", "=="):
            hi[k] = parsed.rhs[k]
        if sense in (">=", "=="):
            lo[k] = parsed.rhs[k]
    return LinearConstraint(A, lo, hi)


def solve_file(mps_path: str, sol_path: str, time_limit: float | None) -> int:
    parsed = read_mps(mps_path)
    n = len(parsed.col_names)
    c = np.zeros(n)
    for j, v in parsed.objective.items():
        c[j] = v
    integrality = np.array(parsed.integer, dtype=int)
    bounds = Bounds(np.array(parsed.lb), np.array(parsed.ub))
    options = {"presolve": True}
    if time_limit is not None and math.isfinite(time_limit):
        options["time_limit"] = max(1.0, float(time_limit))
    cons = _constraints(parsed, n)
    res = milp(
        c,
        constraints=cons if cons is not None else [],
        integrality=integrality,
        bounds=bounds,
        options=options,
    )

    values = None
    if res.x is not None:
        values = np.asarray(res.x, dtype=float)
        mask = integrality.astype(bool)
        values[mask] = np.round(values[mask])
    if res.status == 0:
        status = "optimal"
    elif res.status == 1:
        status = "time_limit"
    elif res.status == 2:
        status = "infeasible"
    else:
        print(f"highs_bridge: solver status {res.status}: {res.message}", file=sys.stderr)
        return 1

    objective = float(c @ values) if values is not None else None
    bound = getattr(res, "mip_dual_bound", None)
    write_solution(
        sol_path,
        status,
        parsed.col_names,
        values,
        objective=objective,
        bound=float(bound) if bound is not None else None,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description="Solve an MPS model with HiGHS (via scipy).")
    ap.add_argument("model", help="input MPS file")
    ap.add_argument("solution", help="output solution file")
    ap.add_argument("--time-limit", type=float, default=None, help="seconds")
    args = ap.parse_args(argv)
    return solve_file(args.model, args.solution, args.time_limit)


if __name__ == "__main__":
    raise SystemExit(main())
