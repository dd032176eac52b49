"""Problem data model for stochastic job-shop scheduling with scrap and rework.

A shop is a set of machine groups (interchangeable machines of one type).
Each job is an ordered chain of operations; every operation may be processed
by one of several eligible groups, takes an integer number of time blocks,
and carries a scrap probability (part is damaged after the operation) and a
rework probability (a damaged part can restart from the failed operation
instead of being discarded and rebuilt from operation 1).

Time is a 1-based grid of ``horizon`` discrete blocks, partitioned into
shifts of ``shift_length`` blocks. A schedule covers the planned first
attempt plus one restart schedule per failure outcome; the outcomes are
weighted by their probabilities (see :func:`scenario_weights`).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

import numpy as np

SCHEMA_VERSION = 1

# Default epsilon for the ceiling linearization; exact for any value in
# (0, 1/shift_length) because completions are integers.
DEFAULT_CEILING_EPSILON = 1e-3


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed."""


@dataclass(frozen=True)
class MachineGroup:
    """A pool of interchangeable machines; ``capacity`` is the machine count."""

    id: int
    capacity: int


@dataclass(frozen=True)
class OperationSpec:
    """One processing step.

    ``eligible`` maps machine-group id to integer processing time (blocks).
    ``scrap_prob`` is the chance the part is damaged after this operation;
    ``rework_prob`` is the chance, given damage, that the part is repairable
    by redoing this operation (otherwise it is discarded and restarted from
    operation 1).
    """

    eligible: tuple[tuple[int, int], ...]
    scrap_prob: float
    rework_prob: float

    def proc_time(self, group_id: int) -> int:
        for g, p in self.eligible:
            if g == group_id:
                return p
        raise KeyError(f"group {group_id} not eligible for this operation")

    @property
    def eligible_groups(self) -> tuple[int, ...]:
        return tuple(g for g, _ in self.eligible)

    @property
    def min_proc_time(self) -> int:
        return min(p for _, p in self.eligible)

    @property
    def max_proc_time(self) -> int:
        return max(p for _, p in self.eligible)


@dataclass(frozen=True)
class Job:
    id: int
    weight: float
    due_date: int
    operations: tuple[OperationSpec, ...]

    @property
    def n_ops(self) -> int:
        return len(self.operations)


@dataclass(frozen=True)
class Instance:
    """A complete scheduling problem datum. Immutable after construction."""

    jobs: tuple[Job, ...]
    machine_groups: tuple[MachineGroup, ...]
    horizon: int
    shift_length: int
    ceiling_epsilon: float = DEFAULT_CEILING_EPSILON

    def group(self, group_id: int) -> MachineGroup:
        for g in self.machine_groups:
            if g.id == group_id:
                return g
        raise KeyError(f"no machine group with id {group_id}")

    def job(self, job_id: int) -> Job:
        for j in self.jobs:
            if j.id == job_id:
                return j
        raise KeyError(f"no job with id {job_id}")

    @property
    def group_ids(self) -> tuple[int, ...]:
        return tuple(g.id for g in self.machine_groups)

    def ops_on_group(self) -> dict[int, list[tuple[int, int]]]:
        """Reverse eligibility map: group id -> [(job id, op index 1-based)]."""
        out: dict[int, list[tuple[int, int]]] = {g.id: [] for g in self.machine_groups}
        for job in self.jobs:
            for j, op in enumerate(job.operations, start=1):
                for g in op.eligible_groups:
                    if g in out:
                        out[g].append((job.id, j))
        return out

    def serial_span(self, job: Job) -> int:
        """Blocks needed to run both attempts of ``job`` back to back."""
        return 2 * sum(op.max_proc_time for op in job.operations)


class ScenarioKind(Enum):
    FIRST_PASS = "first_pass"
    DISCARD = "discard"
    REWORK = "rework"


@dataclass(frozen=True)
class ScenarioKey:
    """Identifies one outcome of a job's execution.

    ``fail_op`` is the 1-based operation after which the part was damaged;
    it is 0 for the first-pass (no-failure) outcome. A discarded part
    restarts from operation 1, a reworked part from ``fail_op``.
    """

    job_id: int
    kind: ScenarioKind
    fail_op: int = 0

    def __post_init__(self):
        if self.kind is ScenarioKind.FIRST_PASS:
            if self.fail_op != 0:
                raise ValueError("first-pass outcome carries no failure index")
        elif self.fail_op < 1:
            raise ValueError(f"{self.kind.value} outcome needs fail_op >= 1")

    def restart_op(self) -> int:
        """First operation executed in the second attempt."""
        if self.kind is ScenarioKind.FIRST_PASS:
            raise ValueError("first-pass outcome has no second attempt")
        return 1 if self.kind is ScenarioKind.DISCARD else self.fail_op


@dataclass(frozen=True)
class ScenarioWeight:
    key: ScenarioKey
    weight: float


def scenario_ops(job: Job, key: ScenarioKey) -> tuple[int, ...]:
    """Operations (1-based) scheduled in the given scenario.

    First pass and discard restarts run the full chain; a rework restart
    re-runs only operations ``fail_op..n_ops``.
    """
    if key.kind is ScenarioKind.REWORK:
        return tuple(range(key.fail_op, job.n_ops + 1))
    return tuple(range(1, job.n_ops + 1))


def scenario_keys(job: Job) -> list[ScenarioKey]:
    """All 1 + 2*J outcomes of a job, in canonical order."""
    keys = [ScenarioKey(job.id, ScenarioKind.FIRST_PASS)]
    for jp in range(1, job.n_ops + 1):
        keys.append(ScenarioKey(job.id, ScenarioKind.DISCARD, jp))
        keys.append(ScenarioKey(job.id, ScenarioKind.REWORK, jp))
    return keys


def scenario_weights(job: Job) -> list[ScenarioWeight]:
    """Probability of each outcome of ``job``.

    With survival products ``Q(j) = prod_{l<=j} (1 - scrap_l)``:

    * first pass: ``Q(J)``
    * failure after op j' has probability ``Q(j'-1) - Q(j')``; it splits into
      rework (factor ``rework_j'``) and discard (factor ``1 - rework_j'``).

    The weights telescope to 1 for any probability data.
    """
    survive = 1.0
    out = []
    discards = []
    reworks = []
    for jp, op in enumerate(job.operations, start=1):
        fail = survive * op.scrap_prob
        survive *= 1.0 - op.scrap_prob
        discards.append(
            ScenarioWeight(ScenarioKey(job.id, ScenarioKind.DISCARD, jp), fail * (1.0 - op.rework_prob))
        )
        reworks.append(
            ScenarioWeight(ScenarioKey(job.id, ScenarioKind.REWORK, jp), fail * op.rework_prob)
        )
    out.append(ScenarioWeight(ScenarioKey(job.id, ScenarioKind.FIRST_PASS), survive))
    for d, r in zip(discards, reworks):
        out.append(d)
        out.append(r)
    return out


def scenario_weight_map(job: Job) -> dict[ScenarioKey, float]:
    return {sw.key: sw.weight for sw in scenario_weights(job)}


def reach_probability(job: Job, op_index: int) -> float:
    """Chance the part is still in play when operation ``op_index`` starts.

    This is the survival product over operations 1..op_index-1 and is the
    coefficient a first-attempt placement contributes to the expected
    machine-usage rows (a part occupies a machine for op j whenever it
    survived the first j-1 operations).
    """
    p = 1.0
    for op in job.operations[: op_index - 1]:
        p *= 1.0 - op.scrap_prob
    return p


def capacity_coefficient(job: Job, key: ScenarioKey, op_index: int) -> float:
    """Expected-usage coefficient of one placement in a capacity row."""
    if key.kind is ScenarioKind.FIRST_PASS:
        return reach_probability(job, op_index)
    return scenario_weight_map(job)[key]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_instance(inst: Instance) -> list[str]:
    """Check every structural invariant; returns one message per violation.

    An empty list means the instance is well formed. The validator reports
    rather than raises so callers can aggregate diagnostics.
    """
    problems: list[str] = []
    group_ids = set()
    for g in inst.machine_groups:
        if g.id in group_ids:
            problems.append(f"MachineGroup.id: duplicate id {g.id}")
        group_ids.add(g.id)
        if g.capacity < 1:
            problems.append(f"MachineGroup.capacity: group {g.id} has capacity {g.capacity} < 1")
    if not inst.machine_groups:
        problems.append("Instance.machine_groups: empty")

    if inst.horizon < 1:
        problems.append(f"Instance.horizon: {inst.horizon} < 1")
    if inst.shift_length < 1:
        problems.append(f"Instance.shift_length: {inst.shift_length} < 1")
    if not (0.0 < inst.ceiling_epsilon < 1.0):
        problems.append(f"Instance.ceiling_epsilon: {inst.ceiling_epsilon} outside (0, 1)")
    elif inst.shift_length >= 1 and inst.ceiling_epsilon >= 1.0 / inst.shift_length:
        problems.append(
            "Instance.ceiling_epsilon: "
            f"{inst.ceiling_epsilon} >= 1/shift_length; ceiling linearization not exact"
        )

    job_ids = set()
    for job in inst.jobs:
        tag = f"job {job.id}"
        if job.id in job_ids:
            problems.append(f"Job.id: duplicate id {job.id}")
        job_ids.add(job.id)
        if job.weight <= 0:
            problems.append(f"Job.weight: {tag} has weight {job.weight} <= 0")
        if job.due_date < 1:
            problems.append(f"Job.due_date: {tag} has due date {job.due_date} < 1")
        if job.n_ops < 1:
            problems.append(f"Job.operations: {tag} has no operations")
        for j, op in enumerate(job.operations, start=1):
            otag = f"{tag} op {j}"
            if not op.eligible:
                problems.append(f"OperationSpec.eligible: {otag} has empty eligible set")
            seen = set()
            for g, p in op.eligible:
                if g not in group_ids:
                    problems.append(f"OperationSpec.eligible: {otag} references unknown group {g}")
                if g in seen:
                    problems.append(f"OperationSpec.eligible: {otag} lists group {g} twice")
                seen.add(g)
                if not (isinstance(p, int) and p >= 1):
                    problems.append(f"OperationSpec.eligible: {otag} proc time {p} not a positive integer")
            if not (0.0 <= op.scrap_prob < 1.0):
                problems.append(f"OperationSpec.scrap_prob: {otag} value {op.scrap_prob} outside [0, 1)")
            if not (0.0 <= op.rework_prob <= 1.0):
                problems.append(f"OperationSpec.rework_prob: {otag} value {op.rework_prob} outside [0, 1]")
    if not inst.jobs:
        problems.append("Instance.jobs: empty")

    # Horizon must at least fit each job run serially through both attempts
    # (plus one shift of restart alignment); tighter packing is the solver's.
    for job in inst.jobs:
        if not job.operations or any(not op.eligible for op in job.operations):
            continue
        need = inst.serial_span(job) + inst.shift_length
        if need > inst.horizon:
            problems.append(
                f"Instance.horizon: job {job.id} needs {need} blocks for both attempts, horizon is {inst.horizon}"
            )
    return problems


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def default_horizon(jobs: Iterable[Job], shift_length: int) -> int:
    """Auto-sized horizon: twice the latest due date plus the longest job's
    two-attempt serial span, rounded up to whole shifts."""
    jobs = list(jobs)
    max_due = max(j.due_date for j in jobs)
    span = max(2 * sum(op.max_proc_time for op in j.operations) for j in jobs)
    raw = 2 * max_due + span + shift_length
    return int(math.ceil(raw / shift_length)) * shift_length


def generate_instance(
    n_jobs: int,
    ops_per_job: int,
    n_groups: int,
    proc_range: tuple[int, int],
    due_range: tuple[int, int],
    capacities: list[int],
    scrap: float,
    rework: float,
    seed: int,
    shift_length: int = 8,
    horizon: int | None = None,
) -> Instance:
    """Random instance with discrete-uniform processing times and due dates.

    Operation j is eligible on exactly one group, cycling through the groups
    in op order (a shop where each group specializes in one operation kind).
    Deterministic for a fixed seed.
    """
    if len(capacities) != n_groups:
        raise ValueError(f"capacities has {len(capacities)} entries, expected {n_groups}")
    if proc_range[0] < 1 or proc_range[0] > proc_range[1]:
        raise ValueError(f"bad proc_range {proc_range}")
    if due_range[0] < 1 or due_range[0] > due_range[1]:
        raise ValueError(f"bad due_range {due_range}")

    rng = np.random.default_rng(seed)
    groups = tuple(MachineGroup(m + 1, int(capacities[m])) for m in range(n_groups))
    jobs = []
    for i in range(1, n_jobs + 1):
        due = int(rng.integers(due_range[0], due_range[1] + 1))
        ops = []
        for j in range(ops_per_job):
            p = int(rng.integers(proc_range[0], proc_range[1] + 1))
            g = (j % n_groups) + 1
            ops.append(OperationSpec(((g, p),), float(scrap), float(rework)))
        jobs.append(Job(i, 1.0, due, tuple(ops)))
    jobs = tuple(jobs)
    T = horizon if horizon is not None else default_horizon(jobs, shift_length)
    return Instance(jobs, groups, T, shift_length)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_KNOWN_TOP = {"schema_version", "jobs", "machine_groups", "horizon", "shift_length", "ceiling_epsilon"}
_KNOWN_JOB = {"id", "weight", "due_date", "scrap_prob", "rework_prob", "operations"}
_KNOWN_OP = {"eligible", "scrap_prob", "rework_prob"}


def instance_to_dict(inst: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "horizon": int(inst.horizon),
        "shift_length": int(inst.shift_length),
        "ceiling_epsilon": float(inst.ceiling_epsilon),
        "machine_groups": [{"id": int(g.id), "capacity": int(g.capacity)} for g in inst.machine_groups],
        "jobs": [
            {
                "id": int(job.id),
                "weight": float(job.weight),
                "due_date": int(job.due_date),
                "operations": [
                    {
                        "eligible": [{"group": int(g), "proc_time": int(p)} for g, p in op.eligible],
                        "scrap_prob": float(op.scrap_prob),
                        "rework_prob": float(op.rework_prob),
                    }
                    for op in job.operations
                ],
            }
            for job in inst.jobs
        ],
    }


def save_instance(inst: Instance, path: Union[str, Path]) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance_to_dict(inst), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return str(path)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise InstanceFormatError(f"missing field {key!r} in {where}")
    return mapping[key]


def instance_from_dict(data: dict, where: str = "instance") -> Instance:
    if not isinstance(data, dict):
        raise InstanceFormatError(f"{where}: root must be an object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise InstanceFormatError(f"{where}: schema_version {version} unsupported (expected {SCHEMA_VERSION})")

    unknown = set(data) - _KNOWN_TOP
    if unknown:
        warnings.warn(f"{where}: ignoring unknown fields {sorted(unknown)}", stacklevel=2)

    groups = []
    for k, g in enumerate(_require(data, "machine_groups", where)):
        gw = f"{where}.machine_groups[{k}]"
        groups.append(MachineGroup(int(_require(g, "id", gw)), int(_require(g, "capacity", gw))))

    jobs = []
    for k, jd in enumerate(_require(data, "jobs", where)):
        jw = f"{where}.jobs[{k}]"
        unknown = set(jd) - _KNOWN_JOB
        if unknown:
            warnings.warn(f"{jw}: ignoring unknown fields {sorted(unknown)}", stacklevel=2)
        job_scrap = jd.get("scrap_prob")
        job_rework = jd.get("rework_prob")
        ops = []
        for q, od in enumerate(_require(jd, "operations", jw)):
            ow = f"{jw}.operations[{q}]"
            unknown = set(od) - _KNOWN_OP
            if unknown:
                warnings.warn(f"{ow}: ignoring unknown fields {sorted(unknown)}", stacklevel=2)
            eligible = tuple(
                (int(_require(e, "group", ow)), int(_require(e, "proc_time", ow)))
                for e in _require(od, "eligible", ow)
            )
            scrap = od.get("scrap_prob", job_scrap)
            rework = od.get("rework_prob", job_rework)
            if scrap is None or rework is None:
                raise InstanceFormatError(f"{ow}: scrap_prob/rework_prob missing at both op and job level")
            ops.append(OperationSpec(eligible, float(scrap), float(rework)))
        jobs.append(
            Job(
                int(_require(jd, "id", jw)),
                float(_require(jd, "weight", jw)),
                int(_require(jd, "due_date", jw)),
                tuple(ops),
            )
        )

    return Instance(
        jobs=tuple(jobs),
        machine_groups=tuple(groups),
        horizon=int(_require(data, "horizon", where)),
        shift_length=int(_require(data, "shift_length", where)),
        ceiling_epsilon=float(data.get("ceiling_epsilon", DEFAULT_CEILING_EPSILON)),
    )


def load_instance(path: Union[str, Path]) -> Instance:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(data, where=str(path))
