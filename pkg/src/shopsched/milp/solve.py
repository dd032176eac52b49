"""Built-in exact solvers for SOS1-structured MILPs.

``solve_builtin`` is a depth-first branch-and-bound over the SOS1 groups in
topological (precedence) order. Committing a group choice propagates through
the rows: domains of not-yet-committed groups are filtered, bounds of
auxiliary (non-group) variables are tightened, and rows that can no longer
be satisfied prune the node. Node pruning uses an additive admissible lower
bound: the cost committed so far, plus each remaining group's cheapest
standalone choice, plus lower bounds of the auxiliary variables, plus the
current value of the soft capacity penalty (which is superadditive in added
machine usage, so per-choice under-counts stay admissible).

``enumerate_all`` is the brute-force oracle: it walks the raw cross product
of the SOS1 choices in chunks with vectorized row evaluation and no search
logic at all, so it exercises none of the branch-and-bound machinery.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import EQ, FEAS_TOL, GE, INT_TOL, LE, MilpModel, MilpSolution, SolveStatus, check_solution

# Pruning slack well below the documented 1e-9 optimality-gap closure so
# that proven optima match the enumeration oracle bit for bit.
PRUNE_SLACK = 1e-12


class ModelStructureError(ValueError):
    """Model contains auxiliary-variable structure the built-in solver cannot complete."""


# ---------------------------------------------------------------------------
# compiled model view
# ---------------------------------------------------------------------------

@dataclass
class _CompiledRow:
    sense: str
    rhs: float
    name: str
    groups: list[int]                      # group ids in support
    coef_by_group: dict[int, np.ndarray]   # group id -> dense per-choice coefs
    gmin: dict[int, float]                 # static per-group min choice coef
    gmax: dict[int, float]
    aux: list[tuple[int, float]]           # (aux slot, coef)
    is_cell: bool = False


@dataclass
class _Cell:
    row: int
    pos: list[int]      # aux slots with +1 coef (fillers / negative-residual side)
    neg: list[int]      # aux slots with -1 coef (overage side)
    pos_obj: np.ndarray
    neg_obj: np.ndarray
    pos_ub: np.ndarray
    neg_ub: np.ndarray
    rhs: float
    slope: float        # admissible lower bound on dP/d(usage)


def _fill_cost(deficit: float, objs: np.ndarray, ubs: np.ndarray) -> float:
    """Cheapest way to absorb ``deficit`` >= 0 across capped nonnegative vars."""
    remaining = deficit
    cost = 0.0
    for k in np.argsort(objs, kind="stable"):
        if remaining <= 0.0:
            break
        take = min(remaining, ubs[k])
        cost += take * objs[k]
        remaining -= take
    if remaining > FEAS_TOL:
        return math.inf
    return cost


def _fill_values(deficit: float, objs: np.ndarray, ubs: np.ndarray) -> np.ndarray:
    vals = np.zeros(len(objs))
    remaining = deficit
    for k in np.argsort(objs, kind="stable"):
        if remaining <= 0.0:
            break
        take = min(remaining, ubs[k])
        vals[k] = take
        remaining -= take
    return vals


class _Compiled:
    """Index structures shared by the search: groups, rows, aux variables."""

    def __init__(self, model: MilpModel):
        self.model = model
        self.groups = [list(g) for g in model.sos1_groups]
        self.n_groups = len(self.groups)
        in_group = {}
        for g, members in enumerate(self.groups):
            for pos, v in enumerate(members):
                if v in in_group:
                    raise ModelStructureError(f"variable {model.var_names[v]} is in two SOS1 groups")
                in_group[v] = (g, pos)
        self.in_group = in_group

        self.aux_vars = [v for v in range(model.n_vars) if v not in in_group]
        self.aux_slot = {v: k for k, v in enumerate(self.aux_vars)}
        self.aux_lb = np.array([model.lb[v] for v in self.aux_vars], dtype=float)
        self.aux_ub = np.array([model.ub[v] for v in self.aux_vars], dtype=float)
        self.aux_int = np.array([model.integer[v] for v in self.aux_vars], dtype=bool)
        self.aux_obj = np.array([model.objective.get(v, 0.0) for v in self.aux_vars], dtype=float)

        self.choice_obj = [
            np.array([model.objective.get(v, 0.0) for v in members], dtype=float) for members in self.groups
        ]

        # Compile rows, dropping the explicit SOS1 sum-to-one rows (branching
        # satisfies them by construction; the independent checker still sees them).
        sos_supports = {frozenset(g) for g in self.groups}
        self.rows: list[_CompiledRow] = []
        for row in model.rows:
            support = frozenset(row.coefs)
            if (
                row.sense == EQ
                and row.rhs == 1.0
                and support in sos_supports
                and all(c == 1.0 for c in row.coefs.values())
            ):
                continue
            by_group: dict[int, np.ndarray] = {}
            aux_entries: list[tuple[int, float]] = []
            for v, c in row.coefs.items():
                if v in in_group:
                    g, pos = in_group[v]
                    vec = by_group.setdefault(g, np.zeros(len(self.groups[g])))
                    vec[pos] = c
                else:
                    aux_entries.append((self.aux_slot[v], float(c)))
            aux_entries.sort()
            self.rows.append(
                _CompiledRow(
                    sense=row.sense,
                    rhs=row.rhs,
                    name=row.name,
                    groups=sorted(by_group),
                    coef_by_group=by_group,
                    gmin={g: float(vec.min()) for g, vec in by_group.items()},
                    gmax={g: float(vec.max()) for g, vec in by_group.items()},
                    aux=aux_entries,
                )
            )

        self.group_rows: list[list[int]] = [[] for _ in range(self.n_groups)]
        self.aux_in_rows: list[list[int]] = [[] for _ in self.aux_vars]
        for r, row in enumerate(self.rows):
            for g in row.groups:
                self.group_rows[g].append(r)
            for a, _ in row.aux:
                self.aux_in_rows[a].append(r)

        self._detect_cells()
        for a in range(len(self.aux_vars)):
            if self.aux_in_cell[a]:
                continue
            for r in self.aux_in_rows[a]:
                if len(self.rows[r].aux) != 1:
                    raise ModelStructureError(
                        f"variable {model.var_names[self.aux_vars[a]]} shares row "
                        f"{self.rows[r].name!r} with other non-group variables outside a "
                        "penalized-slack pattern"
                    )
        self._build_floors()
        self.bound_aux = [
            a for a in range(len(self.aux_vars)) if self.aux_obj[a] != 0.0 and not self.aux_in_cell[a]
        ]
        self.order = self._topo_order()

    # -- soft capacity cells ------------------------------------------------

    def _detect_cells(self) -> None:
        """Find penalized-slack rows: EQ rows with unit-coefficient nonnegative
        aux variables on both sides (usage + fillers - overage = rhs)."""
        self.cells: list[_Cell] = []
        self.cell_of_row: dict[int, int] = {}
        self.aux_in_cell = np.zeros(len(self.aux_vars), dtype=bool)
        for r, row in enumerate(self.rows):
            if row.sense != EQ or not row.aux or not row.groups:
                continue
            pos, neg = [], []
            ok = True
            for a, c in row.aux:
                if self.aux_lb[a] != 0.0 or self.aux_obj[a] < 0.0 or len(self.aux_in_rows[a]) != 1:
                    ok = False
                    break
                if c == 1.0:
                    pos.append(a)
                elif c == -1.0:
                    neg.append(a)
                else:
                    ok = False
                    break
            if not ok or not neg:
                continue  # no overage side: hard row, handled by interval propagation
            if any(vec.min() < 0.0 for vec in row.coef_by_group.values()):
                continue
            pos_obj = self.aux_obj[pos] if pos else np.zeros(0)
            slope = -float(pos_obj.min()) if len(pos_obj) else 0.0
            cell = _Cell(
                row=r,
                pos=pos,
                neg=neg,
                pos_obj=pos_obj,
                neg_obj=self.aux_obj[neg],
                pos_ub=self.aux_ub[pos] if pos else np.zeros(0),
                neg_ub=self.aux_ub[neg],
                rhs=row.rhs,
                slope=slope,
            )
            self.cell_of_row[r] = len(self.cells)
            self.cells.append(cell)
            row.is_cell = True
            for a in pos + neg:
                self.aux_in_cell[a] = True

    def cell_value(self, cell: _Cell, usage: float) -> float:
        """Optimal filler/overage cost for one cell at the given usage."""
        s = usage - cell.rhs
        if s >= 0.0:
            return _fill_cost(s, cell.neg_obj, cell.neg_ub)
        return _fill_cost(-s, cell.pos_obj, cell.pos_ub)

    def cell_values(self, cell: _Cell, usage: float) -> tuple[float, np.ndarray, np.ndarray]:
        s = usage - cell.rhs
        if s >= 0.0:
            neg_vals = _fill_values(s, cell.neg_obj, cell.neg_ub)
            pos_vals = np.zeros(len(cell.pos))
        else:
            pos_vals = _fill_values(-s, cell.pos_obj, cell.pos_ub)
            neg_vals = np.zeros(len(cell.neg))
        cost = float(pos_vals @ cell.pos_obj) + float(neg_vals @ cell.neg_obj)
        return cost, pos_vals, neg_vals

    # -- additive bound floors ------------------------------------------------

    def _build_floors(self) -> None:
        """Per-choice floor cost: objective coefficient plus the worst-case
        (most negative, hence admissible) change of the cell penalties."""
        self.floor = [arr.copy() for arr in self.choice_obj]
        for r, row in enumerate(self.rows):
            if not row.is_cell:
                continue
            cell = self.cells[self.cell_of_row[r]]
            if cell.slope == 0.0:
                continue
            for g, vec in row.coef_by_group.items():
                self.floor[g] += cell.slope * vec

    # -- branching order ------------------------------------------------------

    def _topo_order(self) -> list[int]:
        """Stable topological order of the groups along two-group difference
        rows (the precedence rows): the group with negative coefficients must
        commit before the group it constrains from below."""
        succ: list[set[int]] = [set() for _ in range(self.n_groups)]
        indeg = [0] * self.n_groups
        for row in self.rows:
            if row.aux or len(row.groups) != 2:
                continue
            a, b = row.groups
            va, vb = row.coef_by_group[a], row.coef_by_group[b]
            if row.sense == LE:
                va, vb = -va, -vb  # normalize to >=
            elif row.sense == EQ:
                continue
            if va.max() <= 0.0 and vb.min() >= 0.0:
                src, dst = a, b
            elif vb.max() <= 0.0 and va.min() >= 0.0:
                src, dst = b, a
            else:
                continue
            if dst not in succ[src]:
                succ[src].add(dst)
                indeg[dst] += 1
        ready = [g for g in range(self.n_groups) if indeg[g] == 0]
        heapq.heapify(ready)
        order: list[int] = []
        while ready:
            g = heapq.heappop(ready)
            order.append(g)
            for d in succ[g]:
                indeg[d] -= 1
                if indeg[d] == 0:
                    heapq.heappush(ready, d)
        if len(order) != self.n_groups:  # cycle: fall back to construction order
            seen = set(order)
            order.extend(g for g in range(self.n_groups) if g not in seen)
        return order


# ---------------------------------------------------------------------------
# search state
# ---------------------------------------------------------------------------

class _Infeasible(Exception):
    pass


class _State:
    def __init__(self, comp: _Compiled):
        self.comp = comp
        self.domain = [np.ones(len(g), dtype=bool) for g in comp.groups]
        self.dom_count = [len(g) for g in comp.groups]
        self.committed = [-1] * comp.n_groups
        self.alo = comp.aux_lb.copy()
        self.ahi = comp.aux_ub.copy()
        self.row_committed = np.zeros(len(comp.rows))
        self.row_nunc = np.array([len(r.groups) for r in comp.rows], dtype=int)
        # per-row, per-group min/max coefficient over the current domain;
        # kept current so filtering one group propagates through its rows
        self.dyn_min = [dict(r.gmin) for r in comp.rows]
        self.dyn_max = [dict(r.gmax) for r in comp.rows]
        self.row_min_unc = np.array([sum(r.gmin.values()) for r in comp.rows])
        self.row_max_unc = np.array([sum(r.gmax.values()) for r in comp.rows])
        self.cell_usage = np.zeros(len(comp.cells))
        self.penalty_base = sum(comp.cell_value(c, 0.0) for c in comp.cells)
        self.committed_obj = 0.0
        self.floor_min = [float(f.min()) if len(f) else 0.0 for f in comp.floor]
        self.trail: list = []

    # -- trail ---------------------------------------------------------------

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            kind, *payload = self.trail.pop()
            if kind == 0:   # domain
                g, mask, cnt, fmin = payload
                self.domain[g] = mask
                self.dom_count[g] = cnt
                self.floor_min[g] = fmin
            elif kind == 1:  # aux bounds
                a, lo, hi = payload
                self.alo[a] = lo
                self.ahi[a] = hi
            elif kind == 2:  # row state
                r, com, nunc, mn, mx = payload
                self.row_committed[r] = com
                self.row_nunc[r] = nunc
                self.row_min_unc[r] = mn
                self.row_max_unc[r] = mx
            elif kind == 3:  # cell
                c, usage, base = payload
                self.cell_usage[c] = usage
                self.penalty_base = base
            elif kind == 5:  # dynamic row/group extrema
                r, g, mn, mx = payload
                self.dyn_min[r][g] = mn
                self.dyn_max[r][g] = mx
            else:            # committed group / objective
                g, obj = payload
                self.committed[g] = -1
                self.committed_obj = obj

    # -- propagation helpers ---------------------------------------------------

    def _aux_span(self, row: _CompiledRow, skip: int = -1) -> tuple[float, float]:
        lo = hi = 0.0
        for a, c in row.aux:
            if a == skip:
                continue
            if c > 0:
                lo += c * self.alo[a]
                hi += c * self.ahi[a]
            else:
                lo += c * self.ahi[a]
                hi += c * self.alo[a]
        return lo, hi

    def _tighten_aux(self, a: int, lo: float, hi: float, queue: list[int]) -> None:
        changed = False
        if lo > self.alo[a] + 1e-12:
            self.trail.append((1, a, self.alo[a], self.ahi[a]))
            self.alo[a] = math.ceil(lo - INT_TOL) if self.comp.aux_int[a] else lo
            changed = True
        if hi < self.ahi[a] - 1e-12:
            if not changed:
                self.trail.append((1, a, self.alo[a], self.ahi[a]))
            self.ahi[a] = math.floor(hi + INT_TOL) if self.comp.aux_int[a] else hi
            changed = True
        if not changed:
            return
        if self.alo[a] > self.ahi[a] + FEAS_TOL:
            raise _Infeasible
        queue.extend(self.comp.aux_in_rows[a])

    def _filter_domain(self, g: int, keep: np.ndarray, queue: list[int]) -> None:
        mask = self.domain[g] & keep
        cnt = int(mask.sum())
        if cnt == self.dom_count[g]:
            return
        if cnt == 0:
            raise _Infeasible
        self.trail.append((0, g, self.domain[g], self.dom_count[g], self.floor_min[g]))
        self.domain[g] = mask
        self.dom_count[g] = cnt
        self.floor_min[g] = float(self.comp.floor[g][mask].min())
        # refresh this group's extrema in every row it touches; requeue rows
        # whose group-side span tightened so their consequences propagate
        for r in self.comp.group_rows[g]:
            vec = self.comp.rows[r].coef_by_group[g][mask]
            nmin, nmax = float(vec.min()), float(vec.max())
            omin, omax = self.dyn_min[r][g], self.dyn_max[r][g]
            if nmin == omin and nmax == omax:
                continue
            self.trail.append((5, r, g, omin, omax))
            self.trail.append((2, r, self.row_committed[r], self.row_nunc[r], self.row_min_unc[r], self.row_max_unc[r]))
            self.dyn_min[r][g] = nmin
            self.dyn_max[r][g] = nmax
            self.row_min_unc[r] += nmin - omin
            self.row_max_unc[r] += nmax - omax
            queue.append(r)

    def _process_row(self, r: int, queue: list[int]) -> None:
        """Bounds-consistency pass over one row: tighten auxiliary variable
        bounds, filter every uncommitted group's domain against the slack the
        rest of the row can still provide, and fail rows that cannot reach
        their right-hand side any more."""
        row = self.comp.rows[r]
        com = self.row_committed[r]
        nunc = self.row_nunc[r]
        gmin = self.row_min_unc[r]  # static min/max over all uncommitted groups
        gmax = self.row_max_unc[r]
        alo = ahi = 0.0
        if row.aux:
            for a, c in row.aux:
                olo, ohi = self._aux_span(row, skip=a)
                if row.sense in (GE, EQ):
                    # c*x >= rhs - (com + gmax + ohi)
                    resid = row.rhs - com - gmax - ohi
                    if c > 0:
                        self._tighten_aux(a, resid / c, math.inf, queue)
                    else:
                        self._tighten_aux(a, -math.inf, resid / c, queue)
                if row.sense in (LE, EQ):
                    resid = row.rhs - com - gmin - olo
                    if c > 0:
                        self._tighten_aux(a, -math.inf, resid / c, queue)
                    else:
                        self._tighten_aux(a, resid / c, math.inf, queue)
            alo, ahi = self._aux_span(row)

        if nunc == 0:
            if row.sense in (GE, EQ) and com + ahi < row.rhs - FEAS_TOL:
                raise _Infeasible
            if row.sense in (LE, EQ) and com + alo > row.rhs + FEAS_TOL:
                raise _Infeasible
            return
        if row.sense in (GE, EQ) and com + gmax + ahi < row.rhs - FEAS_TOL:
            raise _Infeasible
        if row.sense in (LE, EQ) and com + gmin + alo > row.rhs + FEAS_TOL:
            raise _Infeasible
        for g in row.groups:
            if self.committed[g] >= 0:
                continue
            vec = row.coef_by_group[g]
            others_max = gmax - self.dyn_max[r][g]
            others_min = gmin - self.dyn_min[r][g]
            keep = np.ones(len(vec), dtype=bool)
            if row.sense in (GE, EQ):
                keep &= com + vec + others_max + ahi >= row.rhs - FEAS_TOL
            if row.sense in (LE, EQ):
                keep &= com + vec + others_min + alo <= row.rhs + FEAS_TOL
            self._filter_domain(g, keep, queue)

    def propagate(self, rows: list[int]) -> None:
        queue = list(rows)
        passes = 0
        while queue:
            passes += 1
            if passes > 200_000:
                break  # bounded effort; leaf checks stay exact
            self._process_row(queue.pop(), queue)

    def root_propagate(self) -> None:
        self.propagate(list(range(len(self.comp.rows))))

    def commit(self, g: int, pos: int) -> None:
        comp = self.comp
        self.trail.append((4, g, self.committed_obj))
        self.committed[g] = pos
        self.committed_obj += comp.choice_obj[g][pos]
        touched = []
        for r in comp.group_rows[g]:
            row = comp.rows[r]
            coef = float(row.coef_by_group[g][pos])
            self.trail.append((2, r, self.row_committed[r], self.row_nunc[r], self.row_min_unc[r], self.row_max_unc[r]))
            self.row_committed[r] += coef
            self.row_nunc[r] -= 1
            self.row_min_unc[r] -= self.dyn_min[r][g]
            self.row_max_unc[r] -= self.dyn_max[r][g]
            touched.append(r)
            if row.is_cell and coef:
                c = comp.cell_of_row[r]
                cell = comp.cells[c]
                self.trail.append((3, c, self.cell_usage[c], self.penalty_base))
                old = comp.cell_value(cell, self.cell_usage[c])
                self.cell_usage[c] += coef
                self.penalty_base += comp.cell_value(cell, self.cell_usage[c]) - old
        self.propagate(touched)

    # -- node bound -------------------------------------------------------------

    def bound(self) -> float:
        comp = self.comp
        total = self.committed_obj + self.penalty_base
        for g in range(comp.n_groups):
            if self.committed[g] < 0:
                total += self.floor_min[g]
        for a in comp.bound_aux:  # cell members are covered by penalty_base
            o = comp.aux_obj[a]
            total += o * (self.alo[a] if o > 0 else self.ahi[a])
        return total

    # -- choice ordering ----------------------------------------------------------

    def choice_keys(self, g: int) -> np.ndarray:
        """Estimated incremental cost per choice: used only for value ordering."""
        comp = self.comp
        keys = comp.choice_obj[g].astype(float).copy()
        for r in comp.group_rows[g]:
            row = comp.rows[r]
            vec = row.coef_by_group[g]
            if row.is_cell:
                c = comp.cell_of_row[r]
                cell = comp.cells[c]
                usage = self.cell_usage[c]
                base = comp.cell_value(cell, usage)
                for pos in np.nonzero(vec)[0]:
                    keys[pos] += comp.cell_value(cell, usage + vec[pos]) - base
            elif row.sense == GE and self.row_nunc[r] == 1 and len(row.aux) == 1:
                a, ca = row.aux[0]
                oa = comp.aux_obj[a]
                if ca > 0 and oa > 0:
                    cand = (row.rhs - self.row_committed[r] - vec) / ca
                    keys += oa * np.maximum(0.0, cand - self.alo[a])
        return keys


# ---------------------------------------------------------------------------
# leaf completion (branch and bound side)
# ---------------------------------------------------------------------------

def _complete_leaf(state: _State) -> tuple[float, np.ndarray] | None:
    """All groups committed: set the auxiliary variables by per-component
    closed forms. Returns (objective, full values) or None if infeasible."""
    comp = state.comp
    model = comp.model
    values = np.zeros(model.n_vars)
    for g, members in enumerate(comp.groups):
        values[members[state.committed[g]]] = 1.0

    acts = state.row_committed  # all groups committed: activity minus aux part
    aux_vals = np.full(len(comp.aux_vars), np.nan)

    for cell in comp.cells:
        usage = acts[cell.row]
        cost, pos_vals, neg_vals = comp.cell_values(cell, usage)
        if not math.isfinite(cost):
            return None
        for a, v in zip(cell.pos, pos_vals):
            aux_vals[a] = v
        for a, v in zip(cell.neg, neg_vals):
            aux_vals[a] = v

    for a in range(len(comp.aux_vars)):
        if not math.isnan(aux_vals[a]):
            continue
        lo, hi = comp.aux_lb[a], comp.aux_ub[a]
        for r in comp.aux_in_rows[a]:
            row = comp.rows[r]
            c = row.aux[0][1]
            resid = row.rhs - acts[r]
            if row.sense in (GE, EQ):
                if c > 0:
                    lo = max(lo, resid / c)
                else:
                    hi = min(hi, resid / c)
            if row.sense in (LE, EQ):
                if c > 0:
                    hi = min(hi, resid / c)
                else:
                    lo = max(lo, resid / c)
        if comp.aux_int[a]:
            lo = math.ceil(lo - INT_TOL)
            hi = math.floor(hi + INT_TOL)
        if lo > hi + FEAS_TOL:
            return None
        hi = max(lo, hi)
        o = comp.aux_obj[a]
        aux_vals[a] = lo if o >= 0 else hi

    for a, v in enumerate(aux_vals):
        values[comp.aux_vars[a]] = v
    return model.objective_value(values), values


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------

def solve_builtin(
    model: MilpModel,
    budget: float | None = None,
    node_limit: int | None = None,
    warm_start: np.ndarray | None = None,
) -> MilpSolution:
    """Exact depth-first branch-and-bound; deterministic for a fixed model.

    Returns OPTIMAL with ``bound == objective`` when the search exhausts,
    the best incumbent with TIME_LIMIT when the budget runs out first, and
    INFEASIBLE when no assignment satisfies the rows. A feasible
    ``warm_start`` assignment seeds the incumbent (an infeasible one is
    silently ignored).
    """
    t0 = time.monotonic()
    comp = _Compiled(model)
    state = _State(comp)

    def make(status, values, obj, bound, nodes):
        return MilpSolution(status, values, obj, bound, time.monotonic() - t0, nodes)

    try:
        state.root_propagate()
    except _Infeasible:
        return make(SolveStatus.INFEASIBLE, None, math.inf, math.inf, 0)

    if comp.n_groups == 0:
        done = _complete_leaf(state)
        if done is None:
            return make(SolveStatus.INFEASIBLE, None, math.inf, math.inf, 0)
        obj, values = done
        return make(SolveStatus.OPTIMAL, values, obj, obj, 0)

    root_bound = state.bound()
    best_obj = math.inf
    best_values: np.ndarray | None = None
    if warm_start is not None and not check_solution(model, warm_start):
        best_obj = model.objective_value(warm_start)
        best_values = np.asarray(warm_start, dtype=float).copy()
    nodes = 0
    out_of_budget = False

    order = comp.order
    # frame: [group, ordered choice positions, next index, trail mark]
    stack: list[list] = []

    def open_frame(depth: int) -> None:
        g = order[depth]
        dom = np.nonzero(state.domain[g])[0]
        keys = state.choice_keys(g)[dom]
        picks = dom[np.argsort(keys, kind="stable")]
        stack.append([g, picks, 0, state.mark()])

    open_frame(0)
    while stack:
        if out_of_budget:
            break
        frame = stack[-1]
        g, picks, nxt, mark = frame
        state.undo(mark)
        if nxt >= len(picks):
            stack.pop()
            continue
        frame[2] += 1
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            out_of_budget = True
            break
        if budget is not None and nodes % 128 == 0 and time.monotonic() - t0 > budget:
            out_of_budget = True
            break
        try:
            state.commit(g, int(picks[nxt]))
        except _Infeasible:
            continue
        if state.bound() >= best_obj - PRUNE_SLACK:
            continue
        if len(stack) == comp.n_groups:
            done = _complete_leaf(state)
            if done is not None:
                obj, values = done
                if obj < best_obj:
                    best_obj = obj
                    best_values = values
            continue
        open_frame(len(stack))

    if out_of_budget:
        if best_values is None:
            return make(SolveStatus.TIME_LIMIT, None, math.inf, root_bound, nodes)
        bad = check_solution(model, best_values)
        if bad:
            raise AssertionError(f"builtin solver produced an invalid incumbent: {bad[:3]}")
        return make(SolveStatus.TIME_LIMIT, best_values, best_obj, root_bound, nodes)
    if best_values is None:
        return make(SolveStatus.INFEASIBLE, None, math.inf, math.inf, nodes)
    bad = check_solution(model, best_values)
    if bad:
        raise AssertionError(f"builtin solver produced an invalid optimum: {bad[:3]}")
    return make(SolveStatus.OPTIMAL, best_values, best_obj, best_obj, nodes)


ENUMERATION_CAP = 10_000_000


def enumerate_all(model: MilpModel, chunk: int = 65536) -> MilpSolution:
    """Exhaustive oracle over the raw cross product of SOS1 choices.

    Vectorized per chunk: evaluates every row on every combination, completes
    auxiliary variables by interval/closed-form rules, and takes the first
    minimum. Rejects models whose choice product exceeds ``ENUMERATION_CAP``.
    """
    t0 = time.monotonic()
    comp = _Compiled(model)
    sizes = [len(g) for g in comp.groups]
    total = 1
    for s in sizes:
        total *= s
        if total > ENUMERATION_CAP:
            raise ValueError(f"enumeration cap exceeded: choice product > {ENUMERATION_CAP}")
    if comp.n_groups == 0:
        res = solve_builtin(model)  # pure-aux model: closed-form completion
        return MilpSolution(res.status, res.values, res.objective, res.bound, time.monotonic() - t0, 0)

    places = np.ones(comp.n_groups, dtype=np.int64)
    for g in range(comp.n_groups - 2, -1, -1):
        places[g] = places[g + 1] * sizes[g + 1]

    best_obj = math.inf
    best_combo: np.ndarray | None = None

    singleton_aux = [
        a
        for a in range(len(comp.aux_vars))
        if not comp.aux_in_cell[a] and all(len(comp.rows[r].aux) == 1 for r in comp.aux_in_rows[a])
    ]
    if len(singleton_aux) + int(comp.aux_in_cell.sum()) != len(comp.aux_vars):
        raise ModelStructureError("enumeration supports only interval and penalized-slack aux structure")

    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = [(idx // places[g]) % sizes[g] for g in range(comp.n_groups)]

        feasible = np.ones(len(idx), dtype=bool)
        objective = np.zeros(len(idx))
        for g in range(comp.n_groups):
            objective += comp.choice_obj[g][digits[g]]

        acts = {}
        for r, row in enumerate(comp.rows):
            act = np.zeros(len(idx))
            for g in row.groups:
                act += row.coef_by_group[g][digits[g]]
            acts[r] = act
            if row.aux:
                continue
            if row.sense == GE:
                feasible &= act >= row.rhs - FEAS_TOL
            elif row.sense == LE:
                feasible &= act <= row.rhs + FEAS_TOL
            else:
                feasible &= np.abs(act - row.rhs) <= FEAS_TOL

        for a in singleton_aux:
            lo = np.full(len(idx), comp.aux_lb[a])
            hi = np.full(len(idx), comp.aux_ub[a])
            for r in comp.aux_in_rows[a]:
                row = comp.rows[r]
                c = row.aux[0][1]
                resid = (row.rhs - acts[r]) / c
                if row.sense == EQ:
                    lo = np.maximum(lo, resid)
                    hi = np.minimum(hi, resid)
                elif (row.sense == GE) == (c > 0):
                    lo = np.maximum(lo, resid)
                else:
                    hi = np.minimum(hi, resid)
            if comp.aux_int[a]:
                lo = np.ceil(lo - INT_TOL)
                hi = np.floor(hi + INT_TOL)
            feasible &= lo <= hi + FEAS_TOL
            o = comp.aux_obj[a]
            if o:
                objective += o * np.where(o > 0, lo, np.maximum(lo, hi))

        for cell in comp.cells:
            s = acts[cell.row] - cell.rhs
            over = np.maximum(s, 0.0)
            under = np.maximum(-s, 0.0)
            cost = np.zeros(len(idx))
            rem = over.copy()
            for k in np.argsort(cell.neg_obj, kind="stable"):
                take = np.minimum(rem, cell.neg_ub[k])
                cost += take * cell.neg_obj[k]
                rem -= take
            feasible &= rem <= FEAS_TOL
            rem = under.copy()
            for k in np.argsort(cell.pos_obj, kind="stable"):
                take = np.minimum(rem, cell.pos_ub[k])
                cost += take * cell.pos_obj[k]
                rem -= take
            feasible &= rem <= FEAS_TOL
            objective += cost

        objective = np.where(feasible, objective, np.inf)
        k = int(np.argmin(objective))
        if objective[k] < best_obj:
            best_obj = float(objective[k])
            best_combo = np.array([digits[g][k] for g in range(comp.n_groups)], dtype=np.int64)

    if best_combo is None:
        return MilpSolution(SolveStatus.INFEASIBLE, None, math.inf, math.inf, time.monotonic() - t0, total)

    # rebuild the winning assignment exactly once
    state = _State(comp)
    for g in range(comp.n_groups):
        state.committed[g] = int(best_combo[g])
    for r, row in enumerate(comp.rows):
        state.row_committed[r] = sum(float(row.coef_by_group[g][best_combo[g]]) for g in row.groups)
    done = _complete_leaf(state)
    if done is None:
        raise AssertionError("enumeration winner failed completion")
    obj, values = done
    bad = check_solution(model, values)
    if bad:
        raise AssertionError(f"enumeration produced an invalid optimum: {bad[:3]}")
    return MilpSolution(SolveStatus.OPTIMAL, values, obj, obj, time.monotonic() - t0, total)
