"""Independent verification of the expectation semantics.

Two cross-checks of the planner's objective plus one diagnostic mode:

* exact scenario enumeration: walks each job's failure tree step by step
  (survive/fail at every operation), independent of the closed-form weight
  products the model uses;
* single-failure Monte Carlo: samples outcomes from the same measure the
  objective integrates over (at most one defect, the restart always
  succeeds), so its mean is an unbiased estimate of the objective;
* full-chain Monte Carlo: the unbounded-retry defect process (advance,
  rework, or discard after every operation, restarts at shift boundaries).
  Real executions can fail more than once, which the two-attempt plan does
  not model; this mode quantifies that model risk and is never used as an
  oracle for the objective.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .instance import Instance, Job, ScenarioKey, ScenarioKind
from .schedule import Schedule, op_completion, scenario_completion, shift_aligned_restart

CHUNK = 65536  # fixed substream block so results are worker-count independent

SINGLE_FAILURE = "single_failure"
FULL_MARKOV = "full_markov"


def _scenario_table(inst: Instance, schedule: Schedule, job: Job) -> tuple[np.ndarray, np.ndarray]:
    """Per-outcome (probability, weighted tardiness) arrays via a stepwise
    tree walk: index 0 is the clean first pass, then (discard j), (rework j)."""
    probs = [0.0]
    tards = [0.0]
    first = schedule.placements[ScenarioKey(job.id, ScenarioKind.FIRST_PASS)]
    reach = 1.0
    for jp, op in enumerate(job.operations, start=1):
        fail = reach * op.scrap_prob
        reach *= 1.0 - op.scrap_prob
        for kind, share in ((ScenarioKind.DISCARD, 1.0 - op.rework_prob), (ScenarioKind.REWORK, op.rework_prob)):
            key = ScenarioKey(job.id, kind, jp)
            pls = schedule.placements.get(key)
            if pls is None:
                raise ValueError(f"schedule incomplete: job {job.id} lacks {kind.value}({jp})")
            c = scenario_completion(job, pls)
            probs.append(fail * share)
            tards.append(job.weight * max(0, c - job.due_date))
    probs[0] = reach
    tards[0] = job.weight * max(0, scenario_completion(job, first) - job.due_date)
    return np.array(probs), np.array(tards)


def exact_expected_tardiness(inst: Instance, schedule: Schedule) -> float:
    """Expected weighted tardiness by explicit enumeration of all outcomes."""
    total = 0.0
    for job in inst.jobs:
        probs, tards = _scenario_table(inst, schedule, job)
        total += float(probs @ tards)
    return total


def transition_split(op) -> tuple[float, float, float]:
    """One-step chain probabilities after an operation:
    (advance, rework-restart, discard-restart)."""
    return (1.0 - op.scrap_prob, op.scrap_prob * op.rework_prob, op.scrap_prob * (1.0 - op.rework_prob))


def draw_transition(rng: np.random.Generator, op, at_first_op: bool = False) -> str:
    """Sample what happens after one operation: 'advance', 'rework', 'discard'.

    At the first operation rework and discard coincide (both restart there),
    so every defect is reported as 'discard'.
    """
    if rng.random() < 1.0 - op.scrap_prob:
        return "advance"
    if at_first_op:
        return "discard"
    return "rework" if rng.random() < op.rework_prob else "discard"


@dataclass(frozen=True)
class SimOutcome:
    """One job's realized outcome in one sampled execution."""

    job_id: int
    scenario: ScenarioKey
    completion: int
    weighted_tardiness: float


def sample_outcomes(
    inst: Instance,
    schedule: Schedule,
    samples: int,
    seed: int,
) -> list[list[SimOutcome]]:
    """Per-sample realized outcomes under the one-failure measure.

    Scenario draws follow the per-operation transition probabilities
    (survive each operation, otherwise rework or discard once); completion
    and tardiness are read off the corresponding restart plan.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    per_job = []
    for job in inst.jobs:
        keys = [ScenarioKey(job.id, ScenarioKind.FIRST_PASS)]
        for jp in range(1, job.n_ops + 1):
            keys.append(ScenarioKey(job.id, ScenarioKind.DISCARD, jp))
            keys.append(ScenarioKey(job.id, ScenarioKind.REWORK, jp))
        probs, tards = _scenario_table(inst, schedule, job)
        # table order is (first pass, discard 1, rework 1, discard 2, ...)
        completions = [scenario_completion(job, schedule.placements[k]) for k in keys]
        per_job.append((job, keys, probs, completions, tards))

    out: list[list[SimOutcome]] = []
    for _ in range(samples):
        row = []
        for job, keys, probs, completions, tards in per_job:
            i = int(rng.choice(len(probs), p=probs))
            row.append(SimOutcome(job.id, keys[i], completions[i], float(tards[i])))
        out.append(row)
    return out


@dataclass
class MonteCarloResult:
    mode: str
    samples: int
    mean: float
    std_error: float


def _chunk_rngs(seed: int, n_chunks: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chunks)]


def _single_failure_chunk(inst: Instance, tables, rng: np.random.Generator, n: int) -> np.ndarray:
    total = np.zeros(n)
    for probs, tards in tables:
        idx = rng.choice(len(probs), size=n, p=probs)
        total += tards[idx]
    return total


def _full_markov_job(inst: Instance, schedule: Schedule, job: Job, rng: np.random.Generator) -> float:
    """One realized execution of a job under the unbounded-retry chain.

    The first attempt and the planned restart follow the schedule; any later
    restart is dispatched serially (shortest eligible processing times) from
    the next shift boundary, ignoring machine contention: a deliberate
    simplification, this mode only gauges how far reality can drift from
    the two-attempt model.
    """
    first = schedule.placements[ScenarioKey(job.id, ScenarioKind.FIRST_PASS)]

    def draw(op_index: int) -> str:
        return draw_transition(rng, job.operations[op_index - 1], at_first_op=op_index == 1)

    # attempt 1: follow the plan until a failure (if any)
    failure = None
    clock = 0
    for pl in first:
        clock = op_completion(job, pl)
        outcome = draw(pl.op)
        if outcome != "advance":
            failure = (pl.op, outcome)
            break
    if failure is None:
        return job.weight * max(0, clock - job.due_date)

    jp, outcome = failure
    kind = ScenarioKind.REWORK if outcome == "rework" else ScenarioKind.DISCARD
    plan = schedule.placements[ScenarioKey(job.id, kind, jp)]

    # attempt 2: follow the planned restart, but each operation may fail again
    failure = None
    for pl in plan:
        clock = op_completion(job, pl)
        outcome = draw(pl.op)
        if outcome != "advance":
            failure = (pl.op, outcome)
            break
    if failure is None:
        return job.weight * max(0, clock - job.due_date)

    # beyond the plan: serial greedy re-execution from shift boundaries
    while failure is not None:
        jp, outcome = failure
        start_op = jp if outcome == "rework" else 1
        clock = shift_aligned_restart(inst, clock) - 1
        failure = None
        for op_i in range(start_op, job.n_ops + 1):
            op = job.operations[op_i - 1]
            clock += op.min_proc_time
            outcome = draw(op_i)
            if outcome != "advance":
                failure = (op_i, outcome)
                break
    return job.weight * max(0, clock - job.due_date)


def monte_carlo_tardiness(
    inst: Instance,
    schedule: Schedule,
    samples: int,
    seed: int,
    mode: str = SINGLE_FAILURE,
) -> MonteCarloResult:
    """Sampled weighted tardiness; deterministic for a fixed seed.

    Sampling is blocked into fixed-size substreams so a parallel runner
    merging per-block sums reproduces the sequential result exactly.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if mode not in (SINGLE_FAILURE, FULL_MARKOV):
        raise ValueError(f"unknown mode {mode!r}")

    n_chunks = (samples + CHUNK - 1) // CHUNK
    rngs = _chunk_rngs(seed, n_chunks)
    total = 0.0
    total_sq = 0.0
    if mode == SINGLE_FAILURE:
        tables = [_scenario_table(inst, schedule, job) for job in inst.jobs]
        for ci in range(n_chunks):
            n = min(CHUNK, samples - ci * CHUNK)
            vals = _single_failure_chunk(inst, tables, rngs[ci], n)
            total += float(vals.sum())
            total_sq += float((vals * vals).sum())
    else:
        for ci in range(n_chunks):
            n = min(CHUNK, samples - ci * CHUNK)
            rng = rngs[ci]
            for _ in range(n):
                v = sum(_full_markov_job(inst, schedule, job, rng) for job in inst.jobs)
                total += v
                total_sq += v * v
    mean = total / samples
    var = max(0.0, total_sq / samples - mean * mean)
    std_error = math.sqrt(var / samples)
    return MonteCarloResult(mode, samples, mean, std_error)


def write_evaluation_csv(
    path: Union[str, Path],
    results: list[MonteCarloResult],
    exact_value: float,
) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["mode", "N", "mean", "std_error", "exact_value", "z_score"])
        for r in results:
            z = (r.mean - exact_value) / r.std_error if r.std_error > 0 else 0.0
            w.writerow([r.mode, r.samples, f"{r.mean:.9g}", f"{r.std_error:.9g}", f"{exact_value:.9g}", f"{z:.6g}"])
    return str(path)
