"""Schedule certification, repair, and duality-gap reporting.

``check_feasible`` re-derives every constraint directly from the instance
data (integer ceilings instead of the model's epsilon linearization) so it
can vet both hand-built schedules and decoded solver output. Repair wraps
the boxed re-optimization around a near-feasible anchor, widening the boxes
until the solver finds a feasible point or the widest window fails.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .formulation import build_repair_model
from .instance import Instance, ScenarioKey, ScenarioKind, scenario_keys, scenario_weight_map
from .milp import SolveStatus, SolverBackend
from .schedule import (
    Placement,
    Schedule,
    capacity_vector,
    cell_order,
    complete_schedule_check,
    occupancy,
    op_completion,
    shift_aligned_restart,
)

log = logging.getLogger(__name__)

CAPACITY_TOL = 1e-9


def check_feasible(inst: Instance, schedule: Schedule) -> list[str]:
    """Exact re-check of every scheduling rule; empty list means feasible.

    Covers: one placement per scenario operation on an eligible group inside
    the horizon; chain precedence; restarts strictly after the failed
    completion; restarts at or after the next shift boundary (exact integer
    ceiling); expected machine usage within capacity.
    """
    problems = complete_schedule_check(inst, schedule)
    if problems:
        return problems

    for job in inst.jobs:
        first = schedule.placements[ScenarioKey(job.id, ScenarioKind.FIRST_PASS)]
        completions = {}
        for key in scenario_keys(job):
            pls = schedule.placements[key]
            tag = f"job {job.id} {key.kind.value}({key.fail_op})"
            prev_c = None
            for pl in pls:
                op = job.operations[pl.op - 1]
                if pl.group not in op.eligible_groups:
                    problems.append(f"{tag} op {pl.op}: group {pl.group} not eligible")
                    continue
                c = op_completion(job, pl)
                if pl.start < 1 or c > inst.horizon:
                    problems.append(f"{tag} op {pl.op}: [{pl.start}, {c}] outside horizon 1..{inst.horizon}")
                if prev_c is not None and pl.start < prev_c + 1:
                    problems.append(
                        f"{tag} op {pl.op}: precedence violated (starts {pl.start}, previous completes {prev_c})"
                    )
                prev_c = c
            if key.kind is ScenarioKind.FIRST_PASS:
                for pl in pls:
                    completions[pl.op] = op_completion(job, pl)
        for jp in range(1, job.n_ops + 1):
            c1 = completions[jp]
            floor = shift_aligned_restart(inst, c1)
            for kind in (ScenarioKind.DISCARD, ScenarioKind.REWORK):
                key = ScenarioKey(job.id, kind, jp)
                head = schedule.placements[key][0]
                tag = f"job {job.id} {kind.value}({jp})"
                if head.start < c1 + 1:
                    problems.append(
                        f"{tag}: restart at {head.start} not after first-attempt completion {c1}"
                    )
                if head.start < floor:
                    problems.append(
                        f"{tag}: restart at {head.start} before shift boundary {floor}"
                    )

    occ = occupancy(inst, schedule)
    cap = capacity_vector(inst)
    for k, (m, t) in enumerate(cell_order(inst)):
        if occ[k] > cap[k] + CAPACITY_TOL:
            problems.append(f"capacity: group {m} at block {t}: expected usage {occ[k]:.9f} > {cap[k]}")
    return problems


def repair_schedule(
    inst: Instance,
    anchor: Schedule,
    delta: int,
    backend: SolverBackend,
    budget: float,
    delta_max: int | None = None,
) -> Schedule | None:
    """Re-optimize with begin times boxed around ``anchor``; widen on failure.

    Returns a certified-feasible schedule or None (no improvement found
    within the widest window and the budget).
    """
    if delta_max is None:
        delta_max = inst.shift_length
    t0 = time.monotonic()
    d = int(delta)
    anchor_feasible = not check_feasible(inst, anchor)
    while True:
        left = budget - (time.monotonic() - t0)
        if left <= 0:
            log.info("repair: budget exhausted before delta=%d attempt", d)
            return None
        model, layout = build_repair_model(inst, anchor, d)
        warm = layout.encode(inst, anchor) if anchor_feasible else None
        res = backend.solve(model, budget=left, warm_start=warm)
        if res.is_feasible:
            schedule = layout.decode(res.values)
            bad = check_feasible(inst, schedule)
            if bad:
                raise AssertionError(f"repair returned an infeasible schedule: {bad[:3]}")
            return schedule
        if res.status is SolveStatus.INFEASIBLE:
            if d >= delta_max:
                log.info("repair: infeasible at widest window delta=%d", d)
                return None
            d = min(2 * d if d > 0 else 1, delta_max)
            continue
        log.info("repair: no incumbent within budget at delta=%d", d)
        return None


def _gap_value(feasible: float, bound: float) -> tuple[float, str]:
    if feasible > 0:
        return (feasible - bound) / feasible, "relative"
    return feasible - bound, "absolute"


@dataclass(frozen=True)
class GapReport:
    best_feasible: float
    best_bound: float
    gap: float
    mode: str  # "relative" (fraction of feasible) or "absolute" (difference)
    provenance: str = ""


def compute_gap(feasible_cost: float, bound: float, provenance: str = "") -> GapReport:
    """Duality gap, reported as (feasible - bound) / feasible.

    A nonpositive feasible cost makes the ratio meaningless; the report then
    carries the absolute difference and says so.
    """
    gap, mode = _gap_value(feasible_cost, bound)
    return GapReport(feasible_cost, bound, gap, mode, provenance)


# ---------------------------------------------------------------------------
# artifact files
# ---------------------------------------------------------------------------

def _scenario_label(key: ScenarioKey) -> str:
    if key.kind is ScenarioKind.FIRST_PASS:
        return "first_pass"
    return f"{key.kind.value}({key.fail_op})"


def schedule_to_dict(inst: Instance, schedule: Schedule) -> dict:
    out = {"first_attempt": [], "restart_plans": []}
    for job in inst.jobs:
        for key in scenario_keys(job):
            pls = schedule.placements[key]
            rows = [
                {
                    "op": pl.op,
                    "group": pl.group,
                    "start": pl.start,
                    "end": op_completion(job, pl),
                }
                for pl in pls
            ]
            if key.kind is ScenarioKind.FIRST_PASS:
                out["first_attempt"].append({"job": job.id, "operations": rows})
            else:
                out["restart_plans"].append(
                    {
                        "job": job.id,
                        "fail_op": key.fail_op,
                        "outcome": key.kind.value,
                        "weight": scenario_weight_map(job)[key],
                        "operations": rows,
                    }
                )
    return out


def write_solution_file(
    path: Union[str, Path],
    inst: Instance,
    schedule: Schedule,
    objective: float,
    bound: float,
    gap: GapReport,
    meta: dict | None = None,
) -> str:
    doc = {
        "schema_version": 1,
        "objective": objective,
        "bound": bound,
        "gap": gap.gap,
        "gap_mode": gap.mode,
        "meta": meta or {},
        "schedule": schedule_to_dict(inst, schedule),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return str(path)


def read_solution_file(path: Union[str, Path], inst: Instance) -> tuple[Schedule, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    placements: dict[ScenarioKey, tuple[Placement, ...]] = {}
    for block in doc["schedule"]["first_attempt"]:
        key = ScenarioKey(int(block["job"]), ScenarioKind.FIRST_PASS)
        placements[key] = tuple(
            Placement(int(r["op"]), int(r["group"]), int(r["start"])) for r in block["operations"]
        )
    for block in doc["schedule"]["restart_plans"]:
        key = ScenarioKey(int(block["job"]), ScenarioKind(block["outcome"]), int(block["fail_op"]))
        placements[key] = tuple(
            Placement(int(r["op"]), int(r["group"]), int(r["start"])) for r in block["operations"]
        )
    return Schedule(placements), doc


def write_gantt_csv(path: Union[str, Path], inst: Instance, schedule: Schedule) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "job", "op", "group", "start", "end", "weight"])
        for job in inst.jobs:
            wmap = scenario_weight_map(job)
            for key in scenario_keys(job):
                for pl in schedule.placements[key]:
                    w.writerow(
                        [
                            _scenario_label(key),
                            job.id,
                            pl.op,
                            pl.group,
                            pl.start,
                            op_completion(job, pl),
                            f"{wmap[key]:.12g}",
                        ]
                    )
    return str(path)


def write_convergence_csv(path: Union[str, Path], trace) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["k", "L", "gnorm", "step", "level", "rho", "best_bound", "best_feasible", "wall_ms"])
        for row in trace:
            w.writerow(
                [
                    row.k,
                    f"{row.lagrangian:.9g}",
                    f"{row.gnorm:.9g}",
                    f"{row.stepsize:.9g}",
                    f"{row.level:.9g}",
                    f"{row.rho:.9g}",
                    f"{row.best_bound:.17g}",
                    f"{row.best_feasible:.17g}",
                    f"{row.wall_ms:.3f}",
                ]
            )
    return str(path)
