"""Exact-verdict linear feasibility for systems of inequalities a'x <= b.

Solved as a phase-one LP: minimize the uniform violation t subject to
a'x - t <= b with t bounded below; the system is feasible exactly when the
optimum reaches a nonpositive violation. Degenerate boundary systems (best
violation within tolerance of zero) are reported feasible with the witness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

WITNESS_TOL = 1e-9


@dataclass
class LpFeasibility:
    feasible: bool
    witness: np.ndarray | None
    max_violation: float


def solve_lp_feasibility(
    rows: list[tuple[np.ndarray, float]],
    n_vars: int | None = None,
    tol: float = WITNESS_TOL,
) -> LpFeasibility:
    """Decide whether any x satisfies every row ``a @ x <= b``.

    ``rows`` is a list of (coefficient vector, right-hand side); variables
    are free (unsigned). Returns the witness on feasibility.
    """
    if not rows:
        return LpFeasibility(True, np.zeros(n_vars or 0), 0.0)
    A = np.vstack([np.asarray(a, dtype=float) for a, _ in rows])
    b = np.array([float(beta) for _, beta in rows])
    m, n = A.shape
    if n_vars is not None and n_vars != n:
        raise ValueError(f"rows have {n} coefficients, expected {n_vars}")

    # min t  s.t.  A x - t <= b,  t >= -1
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A1 = np.hstack([A, -np.ones((m, 1))])
    bounds = [(None, None)] * n + [(-1.0, None)]
    res = linprog(c=c, A_ub=A1, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"phase-one LP failed: {res.message}")
    t = float(res.x[-1])
    x = res.x[:-1]
    violation = float(np.max(A @ x - b)) if m else 0.0
    if t <= tol:
        return LpFeasibility(True, x, violation)
    return LpFeasibility(False, None, t)
