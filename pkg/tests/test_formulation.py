import numpy as np
import pytest

from shopsched.formulation import (
    SubproblemFactory,
    build_full_model,
    build_repair_model,
    build_subproblem_model,
    evaluate_objective,
)
from shopsched.instance import ScenarioKey, ScenarioKind, capacity_coefficient
from shopsched.milp import SolveStatus, check_solution, solve_builtin
from shopsched.schedule import Placement, Schedule, cell_order, greedy_schedule, occupancy

from conftest import make_instance, random_tiny_instance, single_op_instance


def one_job_instance(proc=(2,), due=4, scrap=0.05, rework=0.2, horizon=16, shift=8, cap=3):
    ops = [([(1, p)], scrap, rework) for p in proc]
    return make_instance([(1.0, due, ops)], [cap], horizon, shift)


def schedule_for(inst, starts):
    """starts: {(job, kind, fail_op): [(op, group, start), ...]}"""
    placements = {}
    for (jid, kind, fo), pls in starts.items():
        key = ScenarioKey(jid, ScenarioKind(kind), fo)
        placements[key] = tuple(Placement(o, g, s) for o, g, s in pls)
    return Schedule(placements)


class TestCompletionArithmetic:
    def test_start_four_proc_two_completes_at_five(self):
        inst = one_job_instance(proc=(2,), due=5, horizon=24, shift=8)
        job = inst.jobs[0]
        from shopsched.schedule import op_completion

        assert op_completion(job, Placement(1, 1, 4)) == 5

    def test_next_op_begins_at_six(self):
        inst = one_job_instance(proc=(2, 1), due=8, horizon=24, shift=8)
        ok = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 4), (2, 1, 6)],
                (1, "discard", 1): [(1, 1, 9), (2, 1, 11)],
                (1, "rework", 1): [(1, 1, 9), (2, 1, 11)],
                (1, "discard", 2): [(1, 1, 9), (2, 1, 11)],
                (1, "rework", 2): [(2, 1, 9)],
            },
        )
        from shopsched.feasibility import check_feasible

        assert check_feasible(inst, ok) == []
        bad = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 4), (2, 1, 5)],  # starts at completion block
                (1, "discard", 1): [(1, 1, 9), (2, 1, 11)],
                (1, "rework", 1): [(1, 1, 9), (2, 1, 11)],
                (1, "discard", 2): [(1, 1, 9), (2, 1, 11)],
                (1, "rework", 2): [(2, 1, 9)],
            },
        )
        problems = check_feasible(inst, bad)
        assert any("precedence" in p for p in problems)

    def test_model_agrees_with_checker_on_those(self):
        inst = one_job_instance(proc=(2, 1), due=8, horizon=24, shift=8)
        model, layout = build_full_model(inst)
        ok = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 4), (2, 1, 6)],
                (1, "discard", 1): [(1, 1, 9), (2, 1, 11)],
                (1, "rework", 1): [(1, 1, 9), (2, 1, 11)],
                (1, "discard", 2): [(1, 1, 9), (2, 1, 11)],
                (1, "rework", 2): [(2, 1, 9)],
            },
        )
        assert check_solution(model, layout.encode(inst, ok)) == []


class TestShiftCeiling:
    def test_completion_seven_forces_next_shift(self):
        # c1 = 7 with S = 8: the restart integer must be 1, restarts begin at 9
        inst = one_job_instance(proc=(7,), due=10, horizon=32, shift=8)
        model, layout = build_full_model(inst)
        good = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 1)],  # completes at 7
                (1, "discard", 1): [(1, 1, 9)],
                (1, "rework", 1): [(1, 1, 9)],
            },
        )
        values = layout.encode(inst, good)
        assert values[layout.ceil_var[(1, 1)]] == 1.0
        assert check_solution(model, values) == []
        early = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 1)],
                (1, "discard", 1): [(1, 1, 8)],  # inside the same shift
                (1, "rework", 1): [(1, 1, 9)],
            },
        )
        assert check_solution(model, layout.encode(inst, early)) != []

    def test_ceiling_bracket_bounds(self):
        # 0.875 <= y <= 1.874 at c=7, S=8, eps=1e-3: only y=1 fits
        inst = one_job_instance(proc=(7,), due=10, horizon=32, shift=8)
        model, layout = build_full_model(inst)
        y = layout.ceil_var[(1, 1)]
        lo = next(r for r in model.rows if r.name == "ceil_lo[1,1]")
        hi = next(r for r in model.rows if r.name == "ceil_hi[1,1]")
        fp = layout.groups[(1, ScenarioKey(1, ScenarioKind.FIRST_PASS), 1)]
        start1 = next(v for m, t, v in fp.members if t == 1)
        # y - c/S >= 0 and y - c/S <= 1 - eps with c = 7
        assert lo.coefs[y] == 1.0 and lo.coefs[start1] == pytest.approx(-7 / 8)
        assert hi.rhs == pytest.approx(1 - 1e-3)


class TestEvaluateObjective:
    def test_simple_lateness(self):
        inst = one_job_instance(proc=(2,), due=10, scrap=0.0, horizon=32, shift=8)
        sched = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 11)],  # completes at 12
                (1, "discard", 1): [(1, 1, 17)],
                (1, "rework", 1): [(1, 1, 17)],
            },
        )
        assert evaluate_objective(inst, sched) == pytest.approx(2.0, abs=1e-15)

    def test_weighted_scenario_mixture(self):
        # completions 10 / 25 / 18, weights 0.95 / 0.04 / 0.01, due 10
        inst = one_job_instance(proc=(3,), due=10, scrap=0.05, rework=0.2, horizon=40, shift=8)
        sched = schedule_for(
            inst,
            {
                (1, "first_pass", 0): [(1, 1, 8)],   # c = 10
                (1, "discard", 1): [(1, 1, 23)],     # c = 25
                (1, "rework", 1): [(1, 1, 16)],      # c = 18
            },
        )
        assert evaluate_objective(inst, sched) == pytest.approx(0.95 * 0 + 0.04 * 15 + 0.01 * 8, abs=1e-12)
        assert evaluate_objective(inst, sched) == pytest.approx(0.68, abs=1e-12)

    def test_all_on_time_is_zero(self):
        inst = one_job_instance(proc=(1,), due=30, horizon=32, shift=8)
        sched = greedy_schedule(inst)
        assert evaluate_objective(inst, sched) == 0.0

    def test_missing_scenario_reported(self):
        inst = one_job_instance(proc=(2,), due=5, horizon=24, shift=8)
        sched = schedule_for(inst, {(1, "first_pass", 0): [(1, 1, 1)]})
        with pytest.raises(ValueError, match="lacks"):
            evaluate_objective(inst, sched)


class TestModelObjectiveEquivalence:
    def test_encoded_objective_matches_formula(self, rng):
        # two independent code paths: model objective at the encoding vs Eq-style formula
        for trial in range(60):
            inst = random_tiny_instance(int(rng.integers(0, 10_000)))
            try:
                model, layout = build_full_model(inst)
            except ValueError:
                continue
            sched = greedy_schedule(inst)
            values = layout.encode(inst, sched)
            assert model.objective_value(values) == pytest.approx(
                evaluate_objective(inst, sched), abs=1e-9
            )

    def test_capacity_coefficients_are_scenario_weights(self):
        inst = random_tiny_instance(77)
        model, layout = build_full_model(inst)
        by_var = {}
        for info in layout.group_list:
            job = inst.job(info.job_id)
            for m, t, v in info.members:
                by_var[v] = (job, info.key, info.op)
        for k, row_usage in enumerate(layout.usage):
            for v, coef in row_usage.items():
                job, key, op = by_var[v]
                assert coef == pytest.approx(capacity_coefficient(job, key, op), abs=1e-15)

    def test_tardiness_exact_at_optimum(self):
        inst = single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=10)
        model, layout = build_full_model(inst)
        res = solve_builtin(model, budget=60)
        sched = layout.decode(res.values)
        for (jid, key), tv in layout.tard.items():
            job = inst.job(jid)
            from shopsched.schedule import scenario_completion

            c = scenario_completion(job, sched.placements[key])
            assert res.values[tv] == pytest.approx(max(0, c - job.due_date), abs=1e-9)


class TestSubproblemModel:
    def test_rejects_empty_job_set(self):
        inst = single_op_instance()
        with pytest.raises(ValueError):
            build_subproblem_model(inst, set(), None, np.zeros(len(cell_order(inst))), 0.0)

    def test_relaxation_limit_drops_hard_capacity(self):
        inst = single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=10)
        lam = np.zeros(len(cell_order(inst)))
        sub, _ = build_subproblem_model(inst, {1, 2}, None, lam, 0.0)
        assert not any(r.name.startswith("cap[") for r in sub.rows)
        assert any(r.name.startswith("resid[") for r in sub.rows)
        # with zero prices and no penalty the optimum is the uncapacitated one
        relaxed = solve_builtin(sub, budget=60)
        full, _ = build_full_model(inst)
        constrained = solve_builtin(full, budget=60)
        assert relaxed.status is SolveStatus.OPTIMAL
        assert relaxed.objective <= constrained.objective
        sub1, _ = build_subproblem_model(inst, {1}, None, lam, 0.0)
        sub2, _ = build_subproblem_model(inst, {2}, None, lam, 0.0)
        per_job = solve_builtin(sub1).objective + solve_builtin(sub2).objective
        assert relaxed.objective == pytest.approx(per_job, abs=1e-9)

    def test_frozen_usage_enters_residual_rhs(self):
        # job 2 frozen on (group 1, t=3) at weight 1 leaves rhs 0 there (C=1)
        inst = single_op_instance(n_jobs=2, proc=1, due=(3, 4), cap=1, horizon=12)
        fixed = greedy_schedule(inst)
        fixed = Schedule(
            {
                k: (tuple(Placement(p.op, p.group, 3) for p in pls) if k.job_id == 2 and k.kind is ScenarioKind.FIRST_PASS else pls)
                for k, pls in fixed.placements.items()
            }
        )
        lam = np.zeros(len(cell_order(inst)))
        sub, layout = build_subproblem_model(inst, {1}, fixed, lam, 0.5)
        cidx = layout.cidx[(1, 3)]
        row = sub.rows[layout.capacity_rows[cidx]]
        assert row.rhs == pytest.approx(1.0 - 1.0)

    def test_positive_multiplier_keeps_slack_zero(self):
        # one cell priced, no occupancy there, rho = 0: optimal slack is 0
        inst = one_job_instance(proc=(1,), due=8, horizon=16, shift=8)
        lam = np.zeros(len(cell_order(inst)))
        k = 4
        lam[k] = 2.5
        sub, layout = build_subproblem_model(inst, {1}, None, lam, 0.0)
        res = solve_builtin(sub, budget=60)
        assert res.status is SolveStatus.OPTIMAL
        assert res.values[layout.slack[k]] == pytest.approx(0.0, abs=1e-9)

    def test_l1_split_complementarity_at_optimum(self):
        inst = single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=10)
        lam = np.full(len(cell_order(inst)), 0.05)
        sub, layout = build_subproblem_model(inst, {1, 2}, None, lam, 0.7)
        res = solve_builtin(sub, budget=120)
        assert res.status is SolveStatus.OPTIMAL
        for k in layout.over:
            assert res.values[layout.over[k]] * res.values[layout.under[k]] == pytest.approx(0.0, abs=1e-9)

    def test_factory_equivalent_to_direct_build(self):
        inst = single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=10)
        rng = np.random.default_rng(2)
        lam = rng.uniform(0, 0.4, size=len(cell_order(inst)))
        fixed = greedy_schedule(inst)
        others = Schedule({k: v for k, v in fixed.placements.items() if k.job_id != 1})
        direct, _ = build_subproblem_model(inst, {1}, fixed, lam, 0.3)
        fac = SubproblemFactory(inst)
        cached, _ = fac.priced_model(1, occupancy(inst, others), lam, 0.3)
        a = solve_builtin(direct, budget=60)
        b = solve_builtin(cached, budget=60)
        assert a.objective == pytest.approx(b.objective, abs=1e-12)


class TestRepairModel:
    def test_vacuous_window_equals_full_model(self):
        inst = single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=10)
        anchor = greedy_schedule(inst)
        full, _ = build_full_model(inst)
        boxed, _ = build_repair_model(inst, anchor, inst.horizon)
        a = solve_builtin(full, budget=60)
        b = solve_builtin(boxed, budget=60)
        assert a.objective == b.objective

    def test_zero_window_pins_anchor(self):
        inst = single_op_instance(n_jobs=2, proc=2, due=(3, 4), cap=1, horizon=10)
        anchor = greedy_schedule(inst)
        model, layout = build_repair_model(inst, anchor, 0)
        res = solve_builtin(model, budget=60)
        assert res.status is SolveStatus.OPTIMAL
        assert res.objective == pytest.approx(evaluate_objective(inst, anchor), abs=1e-12)
        assert layout.decode(res.values).placements == anchor.placements

    def test_full_model_rejects_invalid_instance(self):
        inst = make_instance([(1.0, 5, [([(1, 2)], 0.1, 0.5)])], [0], horizon=20)
        with pytest.raises(ValueError, match="capacity"):
            build_full_model(inst)

    def test_full_model_probe_rejects_tight_horizon(self):
        # each job alone fits, three together cannot (serial probe fails)
        spec = [(1.0, 6, [([(1, 5)], 0.05, 0.2)])] * 3
        inst = make_instance(spec, [1], horizon=24, shift=4)
        from shopsched.instance import validate_instance

        assert validate_instance(inst) == []
        with pytest.raises(ValueError, match="horizon"):
            build_full_model(inst)
