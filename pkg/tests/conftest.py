"""Shared test fixtures and independent oracles."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from shopsched.instance import Instance, Job, MachineGroup, OperationSpec


def make_instance(jobs_spec, capacities, horizon, shift=4, eps=1e-3) -> Instance:
    """Compact instance builder.

    ``jobs_spec``: list of (weight, due, ops) with ops a list of
    (eligible [(group, proc)], scrap, rework).
    """
    jobs = []
    for i, (w, due, ops) in enumerate(jobs_spec, start=1):
        jobs.append(
            Job(
                i,
                float(w),
                int(due),
                tuple(OperationSpec(tuple(el), float(ps), float(pr)) for el, ps, pr in ops),
            )
        )
    groups = tuple(MachineGroup(m + 1, int(c)) for m, c in enumerate(capacities))
    return Instance(tuple(jobs), groups, int(horizon), int(shift), float(eps))


def single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=12, shift=4, scrap=0.1, rework=0.5):
    spec = [(1.0, due[i], [([(1, proc)], scrap, rework)]) for i in range(n_jobs)]
    return make_instance(spec, [cap], horizon, shift)


def random_tiny_instance(seed: int) -> Instance:
    """Small random instances that keep the enumeration oracle affordable."""
    rng = np.random.default_rng(seed)
    n_jobs = int(rng.integers(1, 4))
    n_groups = int(rng.integers(1, 3))
    n_ops = int(rng.integers(1, 3)) if n_jobs <= 2 else 1
    capacities = [int(rng.integers(1, 3)) for _ in range(n_groups)]
    jobs_spec = []
    for _ in range(n_jobs):
        ops = []
        for _ in range(n_ops):
            k = int(rng.integers(1, n_groups + 1))
            chosen = sorted(rng.choice(n_groups, size=k, replace=False))
            elig = [(int(m) + 1, int(rng.integers(1, 3))) for m in chosen]
            ops.append((elig, float(rng.uniform(0.0, 0.3)), float(rng.uniform(0.0, 1.0))))
        jobs_spec.append((float(rng.integers(1, 4)), int(rng.integers(2, 8)), ops))
    horizon = int(rng.integers(8, 13))
    inst = make_instance(jobs_spec, capacities, horizon, shift=int(rng.integers(2, 5)))
    from shopsched.instance import validate_instance

    while validate_instance(inst):
        horizon += 2
        inst = Instance(inst.jobs, inst.machine_groups, horizon, inst.shift_length, inst.ceiling_epsilon)
    return inst


def raw_choice_product(model) -> int:
    p = 1
    for g in model.sos1_groups:
        p *= len(g)
    return p


# ---------------------------------------------------------------------------
# exact rational feasibility oracle (dense simplex, Bland's rule)
# ---------------------------------------------------------------------------

def rational_feasible(rows: list[tuple[list, float]]) -> bool:
    """Exact feasibility of ``a @ x <= b`` over free x, in Fraction arithmetic.

    Phase-one simplex on: min sum(artificials) s.t. a@x+ - a@x- + s + art = b
    rows rewritten with slack s >= 0 (and rhs made nonnegative). Bland's rule
    guarantees termination. Small systems only.
    """
    if not rows:
        return True
    m = len(rows)
    n = len(rows[0][0])
    # Fraction(float) is exact: the binary expansion converts losslessly
    A = [[Fraction(c) for c in coefs] for coefs, _ in rows]
    b = [Fraction(beta) for _, beta in rows]

    # columns: x+ (n), x- (n), slack (m), artificial (m)
    ncols = 2 * n + 2 * m
    T = [[Fraction(0)] * (ncols + 1) for _ in range(m)]
    basis = []
    for i in range(m):
        sign = 1 if b[i] >= 0 else -1
        for j in range(n):
            T[i][j] = sign * A[i][j]
            T[i][n + j] = -sign * A[i][j]
        T[i][2 * n + i] = Fraction(sign)
        T[i][2 * n + m + i] = Fraction(1)
        T[i][ncols] = sign * b[i]
        basis.append(2 * n + m + i)

    # objective: minimize sum of artificials (expressed via current basis)
    cost = [Fraction(0)] * (ncols + 1)
    for i in range(m):
        for j in range(ncols + 1):
            cost[j] += T[i][j]

    while True:
        enter = -1
        for j in range(ncols):
            if j >= 2 * n + m:
                continue  # never re-enter artificials
            if cost[j] > 0:
                enter = j
                break  # Bland: first improving column
        if enter < 0:
            break
        leave = -1
        best = None
        for i in range(m):
            if T[i][enter] > 0:
                ratio = T[i][ncols] / T[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave < 0:
            break  # unbounded entering column cannot happen with artificials
        piv = T[leave][enter]
        T[leave] = [v / piv for v in T[leave]]
        for i in range(m):
            if i != leave and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [v - f * w for v, w in zip(T[i], T[leave])]
        f = cost[enter]
        if f != 0:
            cost = [v - f * w for v, w in zip(cost, T[leave])]
        basis[leave] = enter

    return cost[ncols] == 0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
