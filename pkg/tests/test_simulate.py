import numpy as np
import pytest

from shopsched.formulation import evaluate_objective
from shopsched.instance import OperationSpec, generate_instance
from shopsched.schedule import greedy_schedule
from shopsched.simulate import (
    FULL_MARKOV,
    SINGLE_FAILURE,
    draw_transition,
    exact_expected_tardiness,
    monte_carlo_tardiness,
    transition_split,
    write_evaluation_csv,
)

from conftest import make_instance, random_tiny_instance


def random_schedule(inst, rng):
    """Feasibility-agnostic random placements (objective math ignores capacity)."""
    from shopsched.instance import scenario_keys, scenario_ops
    from shopsched.schedule import Placement, Schedule

    placements = {}
    for job in inst.jobs:
        for key in scenario_keys(job):
            chain = []
            t = int(rng.integers(1, 4))
            for op_i in scenario_ops(job, key):
                op = job.operations[op_i - 1]
                m, p = op.eligible[int(rng.integers(0, len(op.eligible)))]
                t = int(t + rng.integers(0, 3))
                if t + p - 1 > inst.horizon:
                    t = inst.horizon - p + 1
                chain.append(Placement(op_i, m, t))
                t = t + p
            placements[key] = tuple(chain)
    return Schedule(placements)


class TestExactEnumeration:
    def test_matches_formula_on_many_random_pairs(self):
        rng = np.random.default_rng(17)
        pairs = 0
        seed = 0
        while pairs < 120:
            seed += 1
            inst = random_tiny_instance(seed)
            for _ in range(3):
                sched = random_schedule(inst, rng)
                a = evaluate_objective(inst, sched)
                b = exact_expected_tardiness(inst, sched)
                assert a == pytest.approx(b, abs=1e-9)
                pairs += 1

    def test_known_mixture_value(self):
        inst = make_instance([(1.0, 10, [([(1, 3)], 0.05, 0.2)])], [3], horizon=40, shift=8)
        from shopsched.schedule import Placement, Schedule
        from shopsched.instance import ScenarioKey, ScenarioKind

        sched = Schedule(
            {
                ScenarioKey(1, ScenarioKind.FIRST_PASS): (Placement(1, 1, 8),),   # c = 10
                ScenarioKey(1, ScenarioKind.DISCARD, 1): (Placement(1, 1, 23),),  # c = 25
                ScenarioKey(1, ScenarioKind.REWORK, 1): (Placement(1, 1, 16),),   # c = 18
            }
        )
        assert exact_expected_tardiness(inst, sched) == pytest.approx(0.68, abs=1e-12)

    def test_no_scrap_reduces_to_first_attempt(self):
        inst = make_instance([(2.0, 4, [([(1, 3)], 0.0, 0.5)])], [1], horizon=24, shift=4)
        sched = greedy_schedule(inst)
        from shopsched.instance import ScenarioKey, ScenarioKind
        from shopsched.schedule import scenario_completion

        c1 = scenario_completion(inst.jobs[0], sched.placements[ScenarioKey(1, ScenarioKind.FIRST_PASS)])
        assert exact_expected_tardiness(inst, sched) == pytest.approx(2.0 * max(0, c1 - 4), abs=1e-12)

    def test_generous_due_dates_zero(self):
        inst = generate_instance(3, 2, 2, (1, 2), (50, 60), [2, 2], 0.1, 0.4, seed=2, horizon=64)
        sched = greedy_schedule(inst)
        assert exact_expected_tardiness(inst, sched) == 0.0


class TestMonteCarlo:
    def test_single_failure_unbiased_within_three_sigma(self):
        inst = make_instance([(1.0, 10, [([(1, 3)], 0.05, 0.2)])], [3], horizon=40, shift=8)
        from shopsched.schedule import Placement, Schedule
        from shopsched.instance import ScenarioKey, ScenarioKind

        sched = Schedule(
            {
                ScenarioKey(1, ScenarioKind.FIRST_PASS): (Placement(1, 1, 8),),
                ScenarioKey(1, ScenarioKind.DISCARD, 1): (Placement(1, 1, 23),),
                ScenarioKey(1, ScenarioKind.REWORK, 1): (Placement(1, 1, 16),),
            }
        )
        res = monte_carlo_tardiness(inst, sched, samples=200_000, seed=4, mode=SINGLE_FAILURE)
        assert abs(res.mean - 0.68) <= 3 * res.std_error

    def test_no_scrap_zero_variance_both_modes(self):
        inst = make_instance([(1.0, 3, [([(1, 3)], 0.0, 0.5)])], [1], horizon=24, shift=4)
        sched = greedy_schedule(inst)
        exact = exact_expected_tardiness(inst, sched)
        for mode in (SINGLE_FAILURE, FULL_MARKOV):
            res = monte_carlo_tardiness(inst, sched, samples=4000, seed=1, mode=mode)
            assert res.std_error == 0.0
            assert res.mean == pytest.approx(exact, abs=1e-12)

    def test_deterministic_per_seed(self):
        inst = generate_instance(3, 2, 2, (1, 3), (5, 15), [1, 2], 0.1, 0.4, seed=8)
        sched = greedy_schedule(inst)
        a = monte_carlo_tardiness(inst, sched, samples=50_000, seed=9, mode=SINGLE_FAILURE)
        b = monte_carlo_tardiness(inst, sched, samples=50_000, seed=9, mode=SINGLE_FAILURE)
        assert a.mean == b.mean and a.std_error == b.std_error
        c = monte_carlo_tardiness(inst, sched, samples=50_000, seed=10, mode=SINGLE_FAILURE)
        assert c.mean != a.mean

    def test_clt_rate_std_error_halves(self):
        inst = generate_instance(4, 2, 2, (1, 3), (4, 12), [1, 2], 0.15, 0.4, seed=12)
        sched = greedy_schedule(inst)
        small = monte_carlo_tardiness(inst, sched, samples=10_000, seed=3, mode=SINGLE_FAILURE)
        big = monte_carlo_tardiness(inst, sched, samples=40_000, seed=3, mode=SINGLE_FAILURE)
        assert big.std_error / small.std_error == pytest.approx(0.5, abs=0.12)

    def test_full_markov_runs_and_differs_in_general(self):
        inst = generate_instance(3, 2, 2, (2, 3), (4, 8), [1, 2], 0.25, 0.5, seed=5)
        sched = greedy_schedule(inst)
        res = monte_carlo_tardiness(inst, sched, samples=3000, seed=6, mode=FULL_MARKOV)
        exact = exact_expected_tardiness(inst, sched)
        # repeated failures only add lateness beyond the two-attempt plan
        assert res.mean >= exact - 3 * res.std_error - 1e-9

    def test_rejects_bad_inputs(self):
        inst = generate_instance(2, 1, 1, (1, 2), (4, 8), [1], 0.1, 0.5, seed=5)
        sched = greedy_schedule(inst)
        with pytest.raises(ValueError):
            monte_carlo_tardiness(inst, sched, samples=0, seed=1)
        with pytest.raises(ValueError):
            monte_carlo_tardiness(inst, sched, samples=10, seed=1, mode="weird")


class TestChainTransitions:
    def test_reference_split(self):
        op = OperationSpec(((1, 1),), 0.2, 0.5)
        assert transition_split(op) == pytest.approx((0.8, 0.1, 0.1), abs=1e-15)

    def test_empirical_frequencies_within_three_sigma(self):
        op = OperationSpec(((1, 1),), 0.2, 0.5)
        rng = np.random.default_rng(21)
        n = 200_000
        counts = {"advance": 0, "rework": 0, "discard": 0}
        for _ in range(n):
            counts[draw_transition(rng, op)] += 1
        for key, p in zip(("advance", "rework", "discard"), (0.8, 0.1, 0.1)):
            sigma = (p * (1 - p) / n) ** 0.5
            assert abs(counts[key] / n - p) <= 3 * sigma

    def test_first_op_lumps_defects(self):
        op = OperationSpec(((1, 1),), 0.2, 0.5)
        rng = np.random.default_rng(2)
        outcomes = {draw_transition(rng, op, at_first_op=True) for _ in range(5000)}
        assert outcomes == {"advance", "discard"}


class TestSampleOutcomes:
    def test_draws_follow_scenario_measure(self):
        from shopsched.instance import ScenarioKind, scenario_weight_map
        from shopsched.simulate import sample_outcomes

        inst = generate_instance(2, 2, 2, (1, 2), (6, 12), [2, 2], 0.2, 0.5, seed=14)
        sched = greedy_schedule(inst)
        n = 40_000
        draws = sample_outcomes(inst, sched, n, seed=7)
        assert len(draws) == n and all(len(row) == 2 for row in draws)
        job = inst.jobs[0]
        weights = scenario_weight_map(job)
        counts = {}
        for row in draws:
            out = row[0]
            counts[out.scenario] = counts.get(out.scenario, 0) + 1
        for key, p in weights.items():
            if p == 0:
                assert key not in counts
                continue
            sigma = (p * (1 - p) / n) ** 0.5
            assert abs(counts.get(key, 0) / n - p) <= 4 * sigma

    def test_outcome_fields_consistent_with_schedule(self):
        from shopsched.schedule import scenario_completion
        from shopsched.simulate import sample_outcomes

        inst = generate_instance(2, 2, 2, (1, 2), (4, 8), [2, 2], 0.3, 0.5, seed=15)
        sched = greedy_schedule(inst)
        for row in sample_outcomes(inst, sched, 200, seed=3):
            for out in row:
                job = inst.job(out.job_id)
                assert out.completion == scenario_completion(job, sched.placements[out.scenario])
                want = job.weight * max(0, out.completion - job.due_date)
                assert out.weighted_tardiness == want


def test_evaluation_csv_round_numbers(tmp_path):
    inst = generate_instance(2, 1, 1, (1, 2), (4, 8), [1], 0.1, 0.5, seed=5)
    sched = greedy_schedule(inst)
    exact = exact_expected_tardiness(inst, sched)
    res = [monte_carlo_tardiness(inst, sched, samples=10_000, seed=1, mode=SINGLE_FAILURE)]
    path = write_evaluation_csv(tmp_path / "eval.csv", res, exact)
    import csv

    rows = list(csv.reader(open(path)))
    assert rows[0] == ["mode", "N", "mean", "std_error", "exact_value", "z_score"]
    assert rows[1][0] == SINGLE_FAILURE
    assert int(rows[1][1]) == 10_000
