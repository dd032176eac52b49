"""Schedules: concrete start/completion times for every outcome of every job.

A schedule assigns one (machine group, start time) placement to each
operation that appears in each outcome: the planned first attempt plus one
restart plan per (failed operation, rework-or-discard) combination. Expected
machine usage adds the outcome-probability-weighted occupancy of all these
placements, which is what the capacity limits constrain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import (
    Instance,
    Job,
    ScenarioKey,
    ScenarioKind,
    capacity_coefficient,
    scenario_keys,
    scenario_ops,
)


@dataclass(frozen=True)
class Placement:
    op: int
    group: int
    start: int


@dataclass(frozen=True)
class Schedule:
    """Immutable map from scenario to its ordered operation placements."""

    placements: dict[ScenarioKey, tuple[Placement, ...]]

    def job_ids(self) -> list[int]:
        return sorted({k.job_id for k in self.placements})

    def for_job(self, job_id: int) -> dict[ScenarioKey, tuple[Placement, ...]]:
        return {k: v for k, v in self.placements.items() if k.job_id == job_id}

    def merged_with(self, other: "Schedule") -> "Schedule":
        out = dict(self.placements)
        out.update(other.placements)
        return Schedule(out)


def cell_order(inst: Instance) -> list[tuple[int, int]]:
    """Canonical (group, time) cell enumeration shared by capacity rows and
    multiplier vectors."""
    return [(g.id, t) for g in sorted(inst.machine_groups, key=lambda g: g.id) for t in range(1, inst.horizon + 1)]


def cell_index(inst: Instance) -> dict[tuple[int, int], int]:
    return {cell: k for k, cell in enumerate(cell_order(inst))}


def capacity_vector(inst: Instance) -> np.ndarray:
    """Capacity per cell, aligned with :func:`cell_order`."""
    return np.array([inst.group(m).capacity for m, _ in cell_order(inst)], dtype=float)


def op_completion(job: Job, placement: Placement) -> int:
    p = job.operations[placement.op - 1].proc_time(placement.group)
    return placement.start + p - 1


def scenario_completion(job: Job, placements: tuple[Placement, ...]) -> int:
    return op_completion(job, placements[-1])


def occupancy(inst: Instance, schedule: Schedule) -> np.ndarray:
    """Expected machine usage per cell for a (possibly partial) schedule."""
    idx = cell_index(inst)
    occ = np.zeros(len(idx))
    for key, placements in schedule.placements.items():
        job = inst.job(key.job_id)
        for pl in placements:
            coef = capacity_coefficient(job, key, pl.op)
            p = job.operations[pl.op - 1].proc_time(pl.group)
            for t in range(pl.start, pl.start + p):
                occ[idx[(pl.group, t)]] += coef
    return occ


def shift_aligned_restart(inst: Instance, first_attempt_completion: int) -> int:
    """Earliest block a second attempt may begin: the next shift boundary
    strictly after the failed completion."""
    S = inst.shift_length
    return S * math.ceil(first_attempt_completion / S) + 1


class HorizonError(RuntimeError):
    """The horizon cannot accommodate a straightforward serial schedule."""


def greedy_schedule(inst: Instance) -> Schedule:
    """Deterministic earliest-fit schedule, jobs in due-date order.

    Each operation is placed at the earliest start satisfying its chain
    precedence, restart and shift rules, and the expected capacity limit
    against everything placed so far. Serves as the always-available
    feasible fallback and as the horizon probe for the model builder.
    """
    idx = cell_index(inst)
    cap = capacity_vector(inst)
    occ = np.zeros(len(idx))
    placements: dict[ScenarioKey, tuple[Placement, ...]] = {}

    def place(job: Job, key: ScenarioKey, op_i: int, est: int) -> Placement:
        op = job.operations[op_i - 1]
        coef = capacity_coefficient(job, key, op_i)
        for t in range(est, inst.horizon + 1):
            for m, p in sorted(op.eligible, key=lambda e: (e[1], e[0])):
                if t + p - 1 > inst.horizon:
                    continue
                cells = [idx[(m, u)] for u in range(t, t + p)]
                if all(occ[c] + coef <= cap[c] + 1e-9 for c in cells):
                    for c in cells:
                        occ[c] += coef
                    return Placement(op_i, m, t)
        raise HorizonError(
            f"horizon {inst.horizon} too small: no slot for job {job.id} op {op_i} "
            f"({key.kind.value} scenario) at or after block {est}"
        )

    for job in sorted(inst.jobs, key=lambda j: (j.due_date, j.id)):
        first_key = ScenarioKey(job.id, ScenarioKind.FIRST_PASS)
        chain = []
        est = 1
        completions: dict[int, int] = {}
        for op_i in range(1, job.n_ops + 1):
            pl = place(job, first_key, op_i, est)
            chain.append(pl)
            completions[op_i] = op_completion(job, pl)
            est = completions[op_i] + 1
        placements[first_key] = tuple(chain)

        for jp in range(1, job.n_ops + 1):
            restart_floor = max(shift_aligned_restart(inst, completions[jp]), completions[jp] + 1)
            for kind in (ScenarioKind.DISCARD, ScenarioKind.REWORK):
                key = ScenarioKey(job.id, kind, jp)
                est = restart_floor
                chain = []
                for op_i in scenario_ops(job, key):
                    pl = place(job, key, op_i, est)
                    chain.append(pl)
                    est = op_completion(job, pl) + 1
                placements[key] = tuple(chain)

    return Schedule(placements)


def complete_schedule_check(inst: Instance, schedule: Schedule) -> list[str]:
    """Structural completeness: every scenario present with exactly its ops."""
    problems = []
    for job in inst.jobs:
        for key in scenario_keys(job):
            pls = schedule.placements.get(key)
            want = scenario_ops(job, key)
            if pls is None:
                problems.append(f"job {job.id}: missing {key.kind.value}({key.fail_op}) scenario")
                continue
            got = tuple(pl.op for pl in pls)
            if got != want:
                problems.append(
                    f"job {job.id} {key.kind.value}({key.fail_op}): ops {got} != expected {want}"
                )
    return problems
