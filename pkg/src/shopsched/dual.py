"""Dual decomposition engine.

Capacity rows are priced into the objective by nonnegative multipliers (one
per machine-group/time cell). The engine repeatedly re-optimizes one job's
placements against the current prices while everything else stays frozen,
then steps the multipliers along the resulting constraint-violation
direction. Step sizes follow the level-controlled Polyak rule: the numerator
uses a running overestimate ("level") of the optimal dual value, and the
overestimate is revised whenever the multiplier trail certifies - through an
infeasible linear system over consecutive iterates - that some step was too
long for convergence toward any fixed point.

A penalty coefficient on the absolute capacity residual grows additively
every iteration, pushing subproblem solutions toward feasibility so the
repair step has good anchors. Certified lower bounds come from the
penalty-free separable dual, each per-job piece solved to proven optimality.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .feasibility import check_feasible, repair_schedule
from .formulation import SubproblemFactory, build_subproblem_model, evaluate_objective
from .instance import Instance
from .milp import MilpSolution, SolveStatus, SolverBackend
from .milp.lp import LpFeasibility, solve_lp_feasibility
from .schedule import Schedule, capacity_vector, greedy_schedule, occupancy

log = logging.getLogger(__name__)


class LevelBreached(Exception):
    """Surrogate value reached the level overestimate; re-estimate it."""


class ZeroSubgradient(Exception):
    """No constraint violation direction: dual-feasible stationarity."""


@dataclass
class HyperParams:
    gamma: float = 0.5
    zeta: float = 0.95
    beta: float | None = None              # None: 0.05 * average job weight
    rho0: float = 0.0
    rho_max: float = 10.0
    violation_tol: float | None = None     # None: 1e-3 * ||capacity vector||
    window_cap: int = 40
    subproblem_budget: float = 10.0
    bound_every: int = 20
    bound_budget: float = 20.0             # per-job, when certifying bounds
    delta: int = 2
    delta_max: int | None = None           # None: shift length
    repair_budget: float = 60.0
    repair_every: int = 25
    level_lift: float = 0.05
    max_iterations: int = 100_000
    bound_workers: int = 0                 # 0: one thread per CPU (capped by job count)
    stall_iterations: int = 0              # stop after this many iterations without
                                           # bound or incumbent progress (0: never)

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma {self.gamma} outside (0, 1)")
        if not (0.0 < self.zeta < 1.0):
            raise ValueError(f"zeta {self.zeta} outside (0, 1)")
        if self.beta is not None and self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.violation_tol is not None and self.violation_tol <= 0:
            raise ValueError("violation tolerance must be positive")

    def resolve(self, inst: Instance) -> "HyperParams":
        beta = self.beta
        if beta is None:
            beta = 0.05 * float(np.mean([j.weight for j in inst.jobs]))
        vtol = self.violation_tol
        if vtol is None:
            vtol = 1e-3 * float(np.linalg.norm(capacity_vector(inst)))
        dmax = self.delta_max if self.delta_max is not None else inst.shift_length
        return replace(self, beta=beta, violation_tol=vtol, delta_max=dmax)


@dataclass
class StepRecord:
    stepsize: float
    gnorm_sq: float
    lagrangian: float


@dataclass
class DualState:
    """Multipliers plus everything the level logic needs between iterations."""

    lam: np.ndarray
    stepsize: float
    level: float
    rho: float
    k: int = 0
    window_iterates: list[np.ndarray] = field(default_factory=list)
    window_records: list[StepRecord] = field(default_factory=list)

    def __post_init__(self):
        if not self.window_iterates:
            self.window_iterates = [self.lam.copy()]


@dataclass
class SurrogateEvaluation:
    subgradient: np.ndarray
    lagrangian: float
    overuse_norm: float
    objective: float


def surrogate_subgradient(inst: Instance, schedule: Schedule, lam: np.ndarray, rho: float) -> SurrogateEvaluation:
    """Violation direction and penalized Lagrangian value at a solution.

    Per cell, the slack takes its cost-minimal closed-form value: it fills
    spare capacity only where the multiplier is strictly cheaper than the
    penalty coefficient, otherwise it stays zero.
    """
    cap = capacity_vector(inst)
    occ = occupancy(inst, schedule)
    z = np.where(lam < rho, np.maximum(cap - occ, 0.0), 0.0)
    g = occ + z - cap
    obj = evaluate_objective(inst, schedule)
    lagrangian = obj + float(lam @ g) + rho * float(np.abs(g).sum())
    overuse = float(np.linalg.norm(np.maximum(occ - cap, 0.0)))
    return SurrogateEvaluation(g, lagrangian, overuse, obj)


def compute_stepsize(state: DualState, ev: SurrogateEvaluation, params: HyperParams) -> float:
    """Level-controlled Polyak step: zeta * gamma * (level - L) / ||g||^2."""
    gnorm_sq = float(ev.subgradient @ ev.subgradient)
    if gnorm_sq <= 0.0:
        raise ZeroSubgradient
    if state.level <= ev.lagrangian:
        raise LevelBreached
    return params.zeta * params.gamma * (state.level - ev.lagrangian) / gnorm_sq


def update_multipliers(state: DualState, ev: SurrogateEvaluation, stepsize: float) -> DualState:
    """Project the stepped multipliers back onto the nonnegative orthant and
    extend the detection window."""
    lam = np.maximum(0.0, state.lam + stepsize * ev.subgradient)
    gnorm_sq = float(ev.subgradient @ ev.subgradient)
    state.window_iterates.append(lam.copy())
    state.window_records.append(StepRecord(stepsize, gnorm_sq, ev.lagrangian))
    return replace(
        state,
        lam=lam,
        stepsize=stepsize,
        k=state.k + 1,
        window_iterates=state.window_iterates,
        window_records=state.window_records,
    )


def contraction_rows(iterates: list[np.ndarray]) -> list[tuple[np.ndarray, float]]:
    """Expand ||x - b|| <= ||x - a|| for consecutive iterate pairs (a, b)
    into linear rows 2(a-b)'x <= ||a||^2 - ||b||^2."""
    rows = []
    for a, b in zip(iterates, iterates[1:]):
        rows.append((2.0 * (a - b), float(a @ a - b @ b)))
    return rows


def detect_divergence(iterates: list[np.ndarray]) -> LpFeasibility:
    """FEASIBLE: some point is weakly approached by every consecutive step in
    the window. INFEASIBLE: no such point exists, certifying that at least
    one step in the window exceeded the convergent step bound."""
    if len(iterates) < 2:
        raise ValueError("divergence detection needs at least two iterates")
    return solve_lp_feasibility(contraction_rows(iterates), n_vars=len(iterates[0]))


def update_level(records: list[StepRecord], gamma: float) -> float:
    """New overestimate after an infeasibility certificate: the largest
    back-computed level consistent with the recorded steps."""
    if not records:
        raise ValueError("cannot update the level from an empty window")
    return max(r.stepsize * r.gnorm_sq / gamma + r.lagrangian for r in records)


def apply_divergence_control(state: DualState, gamma: float, window_cap: int) -> tuple[DualState, bool]:
    """Run the divergence check on the iterate window and act on the verdict.

    Infeasibility certifies an oversized step: the level is re-derived from
    the window records and the window restarts at the current multipliers.
    A feasible verdict keeps the window, dropping the oldest entry once the
    cap is exceeded. Returns (state, whether the level was updated).
    """
    if len(state.window_iterates) < 2:
        return state, False
    verdict = detect_divergence(state.window_iterates)
    if not verdict.feasible:
        new_level = update_level(state.window_records, gamma)
        worst = max(r.lagrangian for r in state.window_records)
        if new_level <= worst:
            raise AssertionError("level update failed to exceed window Lagrangian values")
        return (
            DualState(
                lam=state.lam,
                stepsize=state.stepsize,
                level=new_level,
                rho=state.rho,
                k=state.k,
            ),
            True,
        )
    if len(state.window_records) > window_cap:
        state.window_iterates.pop(0)
        state.window_records.pop(0)
    return state, False


def evaluate_dual_bound(
    inst: Instance,
    lam: np.ndarray,
    backend: SolverBackend,
    budget_per_job: float | None = None,
    factory: SubproblemFactory | None = None,
    workers: int = 1,
) -> float | None:
    """Certified lower bound: the penalty-free dual value at ``lam``.

    Separable: each job's priced subproblem is solved to proven optimality;
    any time-limited piece voids the certificate (returns None). The slack
    and penalty columns are omitted (optimal slack is zero for nonnegative
    multipliers without a penalty), keeping each piece small. The per-job
    pieces are independent, so they may run on ``workers`` threads; results
    are summed in job order, identical to a sequential run.
    """
    def piece(job_id: int) -> MilpSolution:
        if factory is not None:
            model, _ = factory.priced_model(job_id, None, lam, 0.0, with_cells=False)
        else:
            model, _ = build_subproblem_model(inst, {job_id}, None, lam, rho=0.0, with_cells=False)
        return backend.solve(model, budget=budget_per_job)

    job_ids = [j.id for j in inst.jobs]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(job_ids))) as pool:
            results = list(pool.map(piece, job_ids))
    else:
        results = [piece(j) for j in job_ids]

    total = 0.0
    for job_id, res in zip(job_ids, results):
        if res.status is not SolveStatus.OPTIMAL:
            log.info("dual bound: job %d subproblem not proven optimal (%s)", job_id, res.status.value)
            return None
        total += res.objective
    cap = capacity_vector(inst)
    return total - float(lam @ cap)


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

@dataclass
class TraceRow:
    k: int
    lagrangian: float
    gnorm: float
    stepsize: float
    level: float
    rho: float
    best_bound: float
    best_feasible: float
    wall_ms: float
    accepted: bool
    overuse: float


@dataclass
class SolveReport:
    best_feasible: float
    best_bound: float
    gap: float
    iterations: int
    wall_time: float
    stop_reason: str
    best_schedule: Schedule
    bound_iteration: int
    level_updates: int
    repairs: int
    params: HyperParams
    trace: list[TraceRow] = field(default_factory=list)


class Engine:
    """Runs the full decomposition loop on one instance."""

    def __init__(
        self,
        inst: Instance,
        backend: SolverBackend,
        params: HyperParams | None = None,
        target_gap: float = 0.10,
        time_limit: float = 600.0,
    ):
        self.inst = inst
        self.backend = backend
        self.params = (params or HyperParams()).resolve(inst)
        self.target_gap = target_gap
        self.time_limit = time_limit
        self.t0 = time.monotonic()

        fallback = greedy_schedule(inst)
        bad = check_feasible(inst, fallback)
        if bad:
            raise AssertionError(f"greedy fallback schedule infeasible: {bad[:3]}")
        self.solutions = fallback
        self.best_schedule = fallback
        self.best_feasible = evaluate_objective(inst, fallback)
        self.best_bound = 0.0  # expected tardiness is nonnegative
        self.bound_iteration = -1
        self.level_updates = 0
        self.repairs = 0
        self._last_repair_anchor: Schedule | None = None
        self.trace: list[TraceRow] = []
        self.job_ids = [j.id for j in inst.jobs]
        self.factory = SubproblemFactory(inst)
        self.cursor = 0
        self.rejects_in_a_row = 0
        self.last_eval = surrogate_subgradient(inst, fallback, np.zeros(len(capacity_vector(inst))), self.params.rho0)

        level0 = self.best_feasible if self.best_feasible > 0 else 1.0
        self.state = DualState(
            lam=np.zeros(len(capacity_vector(inst))),
            stepsize=0.0,
            level=level0,
            rho=self.params.rho0,
        )

    # -- helpers --------------------------------------------------------------

    def elapsed(self) -> float:
        return time.monotonic() - self.t0

    def remaining(self) -> float:
        return self.time_limit - self.elapsed()

    def gap(self) -> float:
        if self.best_feasible <= 0:
            return 0.0
        return (self.best_feasible - max(self.best_bound, 0.0)) / self.best_feasible

    def _accept_incumbent(self, schedule: Schedule, source: str) -> None:
        bad = check_feasible(self.inst, schedule)
        if bad:
            raise AssertionError(f"{source} produced an infeasible schedule: {bad[:3]}")
        cost = evaluate_objective(self.inst, schedule)
        if cost < self.best_feasible - 1e-12:
            log.info("incumbent improved by %s: %.6f -> %.6f", source, self.best_feasible, cost)
            self.best_feasible = cost
            self.best_schedule = schedule
            # any feasible cost overestimates the optimal dual value, so it
            # is a legitimate (and often tighter) level
            if cost > 0 and cost < self.state.level:
                self.state = replace(self.state, level=cost)

    def _record_bound(self, value: float | None) -> None:
        if value is None:
            return
        if value > self.best_feasible + 1e-6 * (1.0 + abs(self.best_feasible)):
            raise AssertionError(
                f"weak duality violated: bound {value} above feasible cost {self.best_feasible}"
            )
        if value > self.best_bound:
            self.best_bound = value
            self.bound_iteration = self.state.k

    def _refresh_level_on_breach(self, ev: SurrogateEvaluation) -> None:
        lift = self.params.level_lift
        new_level = ev.lagrangian + lift * abs(ev.lagrangian) + 1.0
        log.info("level breached at L=%.6f; lifting level %.6f -> %.6f", ev.lagrangian, self.state.level, new_level)
        self.state = replace(self.state, level=new_level)

    # -- one dual iteration -----------------------------------------------------

    def dual_iteration(self) -> SurrogateEvaluation:
        """Solve the next job's subproblem, apply the surrogate acceptance
        rule, then run the step-size/multiplier/penalty updates and the
        divergence bookkeeping."""
        inst, params, state = self.inst, self.params, self.state
        job_id = self.job_ids[self.cursor % len(self.job_ids)]
        self.cursor += 1

        others = Schedule({k: v for k, v in self.solutions.placements.items() if k.job_id != job_id})
        model, sublayout = self.factory.priced_model(job_id, occupancy(inst, others), state.lam, state.rho)
        res = self.backend.solve(model, budget=min(params.subproblem_budget, max(self.remaining(), 1.0)))
        accepted = False
        if res.is_feasible:
            candidate = self.solutions.merged_with(sublayout.decode(res.values))
            prev = surrogate_subgradient(inst, self.solutions, state.lam, state.rho)
            cand = surrogate_subgradient(inst, candidate, state.lam, state.rho)
            if cand.lagrangian < prev.lagrangian - 1e-12 * (1.0 + abs(prev.lagrangian)):
                self.solutions = candidate
                ev = cand
                accepted = True
                self.rejects_in_a_row = 0
            else:
                ev = prev
                self.rejects_in_a_row += 1
        else:
            if res.status is SolveStatus.INFEASIBLE:
                raise RuntimeError(
                    f"subproblem for job {job_id} infeasible: horizon misconfigured"
                )
            ev = surrogate_subgradient(inst, self.solutions, state.lam, state.rho)
            self.rejects_in_a_row += 1

        # A full rejected pass means the current solution is blockwise optimal
        # at these prices: its violation direction is a usable subgradient.
        force = self.rejects_in_a_row >= len(self.job_ids)
        if force:
            self.rejects_in_a_row = 0

        stepped = False
        if accepted or force:
            try:
                s = compute_stepsize(self.state, ev, params)
                self.state = update_multipliers(self.state, ev, s)
                stepped = True
            except LevelBreached:
                self._refresh_level_on_breach(ev)
            except ZeroSubgradient:
                pass
        self.state = replace(self.state, rho=min(self.state.rho + params.beta, params.rho_max))
        if not stepped:
            self.state = replace(self.state, k=self.state.k + 1)

        if stepped:
            old_level = self.state.level
            self.state, updated = apply_divergence_control(self.state, params.gamma, params.window_cap)
            if updated:
                self.level_updates += 1
                log.info("divergence detected at k=%d: level %.6f -> %.6f", self.state.k, old_level, self.state.level)

        self.last_eval = ev
        self.trace.append(
            TraceRow(
                k=self.state.k,
                lagrangian=ev.lagrangian,
                gnorm=float(np.linalg.norm(ev.subgradient)),
                stepsize=self.state.stepsize,
                level=self.state.level,
                rho=self.state.rho,
                best_bound=self.best_bound,
                best_feasible=self.best_feasible,
                wall_ms=self.elapsed() * 1e3,
                accepted=accepted or force,
                overuse=ev.overuse_norm,
            )
        )
        return ev

    # -- repairs and bounds -------------------------------------------------------

    def try_repair(self) -> None:
        if self._last_repair_anchor is not None and self._last_repair_anchor.placements == self.solutions.placements:
            return  # nothing moved since the last repair attempt
        self._last_repair_anchor = self.solutions
        budget = min(self.params.repair_budget, max(self.remaining(), 1.0))
        repaired = repair_schedule(
            self.inst,
            self.solutions,
            delta=self.params.delta,
            backend=self.backend,
            budget=budget,
            delta_max=self.params.delta_max,
        )
        self.repairs += 1
        if repaired is not None:
            self._accept_incumbent(repaired, "repair")

    def certify_bound(self) -> None:
        workers = self.params.bound_workers or (os.cpu_count() or 1)
        q = evaluate_dual_bound(
            self.inst,
            self.state.lam,
            self.backend,
            budget_per_job=min(self.params.bound_budget, max(self.remaining(), 1.0)),
            factory=self.factory,
            workers=workers,
        )
        self._record_bound(q)

    # -- main loop -------------------------------------------------------------------

    def run(self) -> SolveReport:
        params = self.params
        stop = "max_iterations"
        it = 0
        last_progress = 0
        progress_mark = (self.best_bound, self.best_feasible)
        while it < params.max_iterations:
            if self.gap() <= self.target_gap:
                stop = "target_gap"
                break
            if self.remaining() <= 0:
                stop = "time_limit"
                break
            if params.stall_iterations and it - last_progress >= params.stall_iterations:
                stop = "stalled"
                break
            it += 1
            ev = self.dual_iteration()
            if ev.overuse_norm <= params.violation_tol or it % params.repair_every == 0:
                if self.gap() > self.target_gap and self.remaining() > 0:
                    self.try_repair()
            if it % params.bound_every == 0 and self.remaining() > 0:
                self.certify_bound()
            if (self.best_bound, self.best_feasible) != progress_mark:
                progress_mark = (self.best_bound, self.best_feasible)
                last_progress = it
        else:
            stop = "max_iterations"

        if self.gap() > self.target_gap and self.remaining() > 0:
            self.certify_bound()
        if self.gap() > self.target_gap and self.remaining() > 0:
            self.try_repair()
        if self.gap() <= self.target_gap and stop not in ("target_gap",):
            stop = "target_gap"

        return SolveReport(
            best_feasible=self.best_feasible,
            best_bound=max(self.best_bound, 0.0),
            gap=self.gap(),
            iterations=it,
            wall_time=self.elapsed(),
            stop_reason=stop,
            best_schedule=self.best_schedule,
            bound_iteration=self.bound_iteration,
            level_updates=self.level_updates,
            repairs=self.repairs,
            params=params,
            trace=self.trace,
        )


def solve(
    inst: Instance,
    backend: SolverBackend,
    params: HyperParams | None = None,
    target_gap: float = 0.10,
    time_limit: float = 600.0,
) -> SolveReport:
    """Run the decomposition engine to a target duality gap or time limit."""
    return Engine(inst, backend, params, target_gap, time_limit).run()
