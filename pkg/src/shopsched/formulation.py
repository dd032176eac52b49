"""Builds the expected-tardiness scheduling MILPs.

Three variants share one core builder:

* the full problem: every job's placement binaries, per-scenario tardiness
  variables, restart/shift machinery, and hard expected-capacity rows in
  slack-equality form;
* the relaxed per-job-subset subproblem: capacity rows become soft
  "penalized slack" rows (usage + slack - over + under = remaining
  capacity), priced by multipliers on usage and slack and by a penalty
  coefficient on the absolute residual split;
* the repair problem: the full problem plus box rows keeping every
  operation's begin time within a window of an anchor schedule.

Begin/completion times are affine in the placement binaries: a placement
starting at t with processing time p begins at t and completes at t+p-1,
so the next operation in a chain may begin at t+p.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .instance import (
    Instance,
    Job,
    ScenarioKey,
    ScenarioKind,
    capacity_coefficient,
    scenario_keys,
    scenario_ops,
    scenario_weight_map,
    validate_instance,
)
from .milp.model import EQ, GE, LE, MilpModel, Row
from .schedule import (
    HorizonError,
    Placement,
    Schedule,
    cell_order,
    greedy_schedule,
    occupancy,
    op_completion,
    scenario_completion,
)

FULL = "full"
RELAXED = "relaxed"


@dataclass
class GroupInfo:
    """One operation's start-time choice set inside a model."""

    job_id: int
    key: ScenarioKey
    op: int
    sos: int
    members: list[tuple[int, int, int]]  # (machine group, start, var index)


@dataclass
class VariableLayout:
    """Bidirectional map between model columns and scheduling semantics."""

    mode: str
    job_ids: tuple[int, ...]
    cells: list[tuple[int, int]]
    cidx: dict[tuple[int, int], int]
    groups: dict[tuple[int, ScenarioKey, int], GroupInfo] = field(default_factory=dict)
    group_list: list[GroupInfo] = field(default_factory=list)
    tard: dict[tuple[int, ScenarioKey], int] = field(default_factory=dict)
    ceil_var: dict[tuple[int, int], int] = field(default_factory=dict)
    slack: dict[int, int] = field(default_factory=dict)
    over: dict[int, int] = field(default_factory=dict)
    under: dict[int, int] = field(default_factory=dict)
    usage: list[dict[int, float]] = field(default_factory=list)      # cell -> {placement var: coefficient}
    capacity_rows: dict[int, int] = field(default_factory=dict)      # cell -> row index

    def decode(self, values: np.ndarray) -> Schedule:
        """Read the chosen placements out of a variable assignment."""
        placements: dict[ScenarioKey, list[Placement]] = {}
        for info in self.group_list:
            chosen = [(m, t) for m, t, v in info.members if values[v] > 0.5]
            if len(chosen) != 1:
                raise ValueError(
                    f"job {info.job_id} {info.key.kind.value}({info.key.fail_op}) op {info.op}: "
                    f"{len(chosen)} placements selected"
                )
            m, t = chosen[0]
            placements.setdefault(info.key, []).append(Placement(info.op, m, t))
        return Schedule({k: tuple(sorted(v, key=lambda pl: pl.op)) for k, v in placements.items()})

    def encode(self, inst: Instance, schedule: Schedule) -> np.ndarray:
        """Variable assignment representing ``schedule`` in the full model.

        Auxiliary variables are set to their implied values (tardiness from
        scenario completions, restart-shift integers from first-attempt
        completions, capacity slack from residual usage); an infeasible
        schedule encodes to an assignment violating the matching rows.
        """
        if self.mode != FULL:
            raise ValueError("encode is defined for the full-model layout only")
        n = 0
        for info in self.group_list:
            n = max(n, max(v for _, _, v in info.members) + 1)
        n = max(
            n,
            max(self.tard.values(), default=-1) + 1,
            max(self.ceil_var.values(), default=-1) + 1,
            max(self.slack.values(), default=-1) + 1,
        )
        values = np.zeros(n)
        for info in self.group_list:
            job = inst.job(info.job_id)
            pls = schedule.placements[info.key]
            pl = next(p for p in pls if p.op == info.op)
            hit = [v for m, t, v in info.members if m == pl.group and t == pl.start]
            if not hit:
                raise ValueError(
                    f"job {info.job_id} op {info.op}: placement ({pl.group}, {pl.start}) not in layout"
                )
            values[hit[0]] = 1.0
        for job in inst.jobs:
            if job.id not in self.job_ids:
                continue
            for key in scenario_keys(job):
                c = scenario_completion(job, schedule.placements[key])
                values[self.tard[(job.id, key)]] = max(0.0, float(c - job.due_date))
            first = schedule.placements[ScenarioKey(job.id, ScenarioKind.FIRST_PASS)]
            for jp in range(1, job.n_ops + 1):
                c1 = op_completion(job, first[jp - 1])
                values[self.ceil_var[(job.id, jp)]] = math.ceil(c1 / inst.shift_length)
        occ = occupancy(inst, schedule)
        for k, zvar in self.slack.items():
            m, _ = self.cells[k]
            values[zvar] = inst.group(m).capacity - occ[k]
        return values


def _completion(job: Job, op_i: int, m: int, t: int) -> int:
    return t + job.operations[op_i - 1].proc_time(m) - 1


def _build(
    inst: Instance,
    job_ids: tuple[int, ...],
    mode: str,
    fixed_occ: np.ndarray | None = None,
    lam: np.ndarray | None = None,
    rho: float = 0.0,
    anchor: Schedule | None = None,
    delta_for_op: dict[int, int] | None = None,
    with_cells: bool = True,
) -> tuple[MilpModel, VariableLayout]:
    T = inst.horizon
    S = inst.shift_length
    cells = cell_order(inst)
    cidx = {cell: k for k, cell in enumerate(cells)}
    model = MilpModel()
    layout = VariableLayout(mode=mode, job_ids=job_ids, cells=cells, cidx=cidx)

    if lam is None:
        lam = np.zeros(len(cells))
    usage_rows: list[dict[int, float]] = [dict() for _ in cells]
    # worst-case expected usage of the whole shop: a safe finite cap for the
    # over/under variables no matter how much frozen usage a cell carries
    total_load = sum(
        capacity_coefficient(job, key, op_i) * job.operations[op_i - 1].max_proc_time
        for job in inst.jobs
        for key in scenario_keys(job)
        for op_i in scenario_ops(job, key)
    )

    for job in inst.jobs:
        if job.id not in job_ids:
            continue
        wmap = scenario_weight_map(job)
        for jp in range(1, job.n_ops + 1):
            layout.ceil_var[(job.id, jp)] = model.add_var(
                f"y[{job.id},{jp}]", 0, T // S + 1, integer=True
            )
        for key in scenario_keys(job):
            ops = scenario_ops(job, key)
            tag = f"{job.id},{key.kind.value[0]}{key.fail_op}"
            for op_i in ops:
                op = job.operations[op_i - 1]
                coef = capacity_coefficient(job, key, op_i)
                members = []
                for m, p in sorted(op.eligible):
                    for t in range(1, T - p + 2):
                        price = 0.0
                        if mode == RELAXED:
                            for u in range(t, t + p):
                                price += lam[cidx[(m, u)]] * coef
                        v = model.add_binary(f"x[{tag},{op_i},{m},{t}]", obj=price)
                        members.append((m, t, v))
                        for u in range(t, t + p):
                            usage_rows[cidx[(m, u)]][v] = coef
                sos = model.add_sos1([v for _, _, v in members], name=f"x[{tag},{op_i}]")
                info = GroupInfo(job.id, key, op_i, sos, members)
                layout.groups[(job.id, key, op_i)] = info
                layout.group_list.append(info)
            tvar = model.add_var(f"tard[{tag}]", 0, T, obj=job.weight * wmap[key])
            layout.tard[(job.id, key)] = tvar

            # chain precedence: next op begins after the previous completes
            for o1, o2 in zip(ops, ops[1:]):
                coefs = {v: float(t) for _, t, v in layout.groups[(job.id, key, o2)].members}
                for m, t, v in layout.groups[(job.id, key, o1)].members:
                    coefs[v] = coefs.get(v, 0.0) - _completion(job, o1, m, t)
                model.add_row(coefs, GE, 1.0, name=f"prec[{tag},{o1}]")

            # expected tardiness: tard >= completion(last op) - due date
            last = ops[-1]
            coefs = {tvar: 1.0}
            for m, t, v in layout.groups[(job.id, key, last)].members:
                coefs[v] = -float(_completion(job, last, m, t))
            model.add_row(coefs, GE, -float(job.due_date), name=f"tard[{tag}]")

        # restart machinery: every failure point jp defines one shift integer
        first_key = ScenarioKey(job.id, ScenarioKind.FIRST_PASS)
        for jp in range(1, job.n_ops + 1):
            y = layout.ceil_var[(job.id, jp)]
            fp = layout.groups[(job.id, first_key, jp)]
            comp = {v: float(_completion(job, jp, m, t)) for m, t, v in fp.members}
            # ceiling bracket: c/S <= y <= c/S + 1 - eps
            model.add_row({y: 1.0, **{v: -c / S for v, c in comp.items()}}, GE, 0.0, name=f"ceil_lo[{job.id},{jp}]")
            model.add_row(
                {y: 1.0, **{v: -c / S for v, c in comp.items()}},
                LE,
                1.0 - inst.ceiling_epsilon,
                name=f"ceil_hi[{job.id},{jp}]",
            )
            for kind in (ScenarioKind.DISCARD, ScenarioKind.REWORK):
                key = ScenarioKey(job.id, kind, jp)
                head = layout.groups[(job.id, key, key.restart_op())]
                # second attempt starts strictly after the failed completion
                coefs = {v: float(t) for _, t, v in head.members}
                for v, c in comp.items():
                    coefs[v] = coefs.get(v, 0.0) - c
                model.add_row(coefs, GE, 1.0, name=f"restart[{job.id},{kind.value[0]}{jp}]")
                # and at or after the next shift boundary
                model.add_row(
                    {y: -float(S), **{v: float(t) for _, t, v in head.members}},
                    GE,
                    1.0,
                    name=f"shift[{job.id},{kind.value[0]}{jp}]",
                )

    # capacity rows, one per (machine group, time block)
    layout.usage = usage_rows
    for k, (m, t) in enumerate(cells):
        cap = float(inst.group(m).capacity)
        if mode == FULL:
            z = model.add_var(f"z[{m},{t}]", 0, cap)
            layout.slack[k] = z
            layout.capacity_rows[k] = model.add_row({**usage_rows[k], z: 1.0}, EQ, cap, name=f"cap[{m},{t}]")
        elif with_cells:
            frozen = float(fixed_occ[k]) if fixed_occ is not None else 0.0
            rhs = cap - frozen
            vub = cap + total_load + frozen + 1.0
            vp = model.add_var(f"over[{m},{t}]", 0, vub, obj=rho)
            vm = model.add_var(f"under[{m},{t}]", 0, vub, obj=rho)
            z = model.add_var(f"z[{m},{t}]", 0, cap, obj=float(lam[k]))
            layout.over[k] = vp
            layout.under[k] = vm
            layout.slack[k] = z
            layout.capacity_rows[k] = model.add_row(
                {**usage_rows[k], z: 1.0, vp: -1.0, vm: 1.0}, EQ, rhs, name=f"resid[{m},{t}]"
            )

    # repair boxes: begin times stay within +/- delta of the anchor
    if anchor is not None:
        for info in layout.group_list:
            pls = anchor.placements.get(info.key)
            if pls is None:
                raise ValueError(
                    f"anchor schedule lacks {info.key.kind.value}({info.key.fail_op}) of job {info.job_id}"
                )
            b0 = next(p.start for p in pls if p.op == info.op)
            d = delta_for_op.get(info.op, 0) if delta_for_op else 0
            begins = {v: float(t) for _, t, v in info.members}
            tag = f"{info.job_id},{info.key.kind.value[0]}{info.key.fail_op},{info.op}"
            model.add_row(begins, GE, float(b0 - d), name=f"box_lo[{tag}]")
            model.add_row(begins, LE, float(b0 + d), name=f"box_hi[{tag}]")

    return model, layout


def build_full_model(inst: Instance, probe: bool = True) -> tuple[MilpModel, VariableLayout]:
    """The complete expected-tardiness MILP over all jobs.

    Raises if the instance is malformed or, when ``probe`` is set, if a
    greedy serial schedule cannot fit the horizon (a sufficient check that
    the model admits a feasible point).
    """
    problems = validate_instance(inst)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    if probe:
        try:
            greedy_schedule(inst)
        except HorizonError as exc:
            raise ValueError(str(exc)) from exc
    return _build(inst, tuple(j.id for j in inst.jobs), FULL)


def build_subproblem_model(
    inst: Instance,
    jobs_in: set[int] | tuple[int, ...],
    fixed: Schedule | None,
    lam: np.ndarray,
    rho: float,
    with_cells: bool = True,
) -> tuple[MilpModel, VariableLayout]:
    """Relaxed problem over ``jobs_in`` with everything else frozen.

    Capacity is priced, not enforced: each cell's row reads
    ``usage + slack - over + under = capacity - frozen usage`` with
    multipliers on usage and slack and penalty ``rho`` on over/under, so the
    objective equals the per-cell terms of the penalized Lagrangian
    restricted to the free jobs (frozen jobs contribute constants).

    ``with_cells=False`` drops the slack/over/under machinery entirely; it
    is only legal for the penalty-free case (``rho == 0``), where the
    optimal slack is zero anyway, and yields a much smaller model with the
    same optimal placements and value.
    """
    job_ids = tuple(j.id for j in inst.jobs if j.id in set(jobs_in))
    if not job_ids:
        raise ValueError("subproblem needs at least one job")
    if lam.shape != (len(cell_order(inst)),):
        raise ValueError(f"multiplier vector has shape {lam.shape}, expected ({len(cell_order(inst))},)")
    if not with_cells and rho != 0.0:
        raise ValueError("the penalty terms cannot be dropped when rho > 0")
    fixed_occ = None
    if fixed is not None:
        outside = Schedule({k: v for k, v in fixed.placements.items() if k.job_id not in job_ids})
        fixed_occ = occupancy(inst, outside)
    return _build(inst, job_ids, RELAXED, fixed_occ=fixed_occ, lam=lam, rho=float(rho), with_cells=with_cells)


def build_repair_model(
    inst: Instance,
    anchor: Schedule,
    delta: int,
    delta_for_op: dict[int, int] | None = None,
) -> tuple[MilpModel, VariableLayout]:
    """Full model plus begin-time boxes of half-width ``delta`` (per-op
    overrides via ``delta_for_op``) around the anchor schedule."""
    problems = validate_instance(inst)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    max_op = max(j.n_ops for j in inst.jobs)
    windows = {op: int(delta) for op in range(1, max_op + 1)}
    if delta_for_op:
        windows.update({int(k): int(v) for k, v in delta_for_op.items()})
    return _build(
        inst,
        tuple(j.id for j in inst.jobs),
        FULL,
        anchor=anchor,
        delta_for_op=windows,
    )


class SubproblemFactory:
    """Per-job skeleton cache for the iteration-heavy engine paths.

    Between dual iterations only the priced objective and the frozen-usage
    right-hand sides change, so the variable/row structure is built once per
    job and shallow-cloned. Clones share coefficient dicts and bound lists
    with their skeleton and must be treated as read-only, which every
    consumer here honors.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self.cells = cell_order(inst)
        self._cache: dict[tuple[int, bool], tuple[MilpModel, VariableLayout, list[list[tuple[int, float]]]]] = {}

    def _skeleton(self, job_id: int, with_cells: bool):
        key = (job_id, with_cells)
        if key not in self._cache:
            zero = np.zeros(len(self.cells))
            model, layout = build_subproblem_model(self.inst, {job_id}, None, zero, 0.0, with_cells=with_cells)
            coverage: list[list[tuple[int, float]]] = [[] for _ in range(model.n_vars)]
            for k, row in enumerate(layout.usage):
                for v, c in row.items():
                    coverage[v].append((k, c))
            self._cache[key] = (model, layout, coverage)
        return self._cache[key]

    def priced_model(
        self,
        job_id: int,
        fixed_occ: np.ndarray | None,
        lam: np.ndarray,
        rho: float,
        with_cells: bool = True,
    ) -> tuple[MilpModel, VariableLayout]:
        """Equivalent to :func:`build_subproblem_model` for a single job,
        minus the construction cost."""
        if not with_cells and rho != 0.0:
            raise ValueError("the penalty terms cannot be dropped when rho > 0")
        skel, layout, coverage = self._skeleton(job_id, with_cells)
        model = copy.copy(skel)
        objective = dict(skel.objective)  # tardiness coefficients
        for v, cover in enumerate(coverage):
            if cover:
                price = 0.0
                for k, c in cover:
                    price += lam[k] * c
                if price:
                    objective[v] = price
        if with_cells:
            for k, zv in layout.slack.items():
                if lam[k]:
                    objective[zv] = float(lam[k])
            if rho:
                for k in layout.over:
                    objective[layout.over[k]] = float(rho)
                    objective[layout.under[k]] = float(rho)
            rows = list(skel.rows)
            for k, ridx in layout.capacity_rows.items():
                old = rows[ridx]
                frozen = float(fixed_occ[k]) if fixed_occ is not None else 0.0
                cap = float(self.inst.group(self.cells[k][0]).capacity)
                rows[ridx] = Row(old.coefs, old.sense, cap - frozen, old.name)
            model.rows = rows
        model.objective = objective
        return model, layout


def evaluate_objective(inst: Instance, schedule: Schedule) -> float:
    """Expected weighted tardiness of a complete schedule (the objective the
    MILP minimizes), computed directly from the closed-form scenario
    weights."""
    total = 0.0
    for job in inst.jobs:
        for key, weight in scenario_weight_map(job).items():
            pls = schedule.placements.get(key)
            if pls is None:
                raise ValueError(
                    f"schedule incomplete: job {job.id} lacks {key.kind.value}({key.fail_op})"
                )
            c = scenario_completion(job, pls)
            total += job.weight * weight * max(0, c - job.due_date)
    return total
