import json

import numpy as np
import pytest

from shopsched.instance import (
    Instance,
    InstanceFormatError,
    Job,
    MachineGroup,
    OperationSpec,
    ScenarioKey,
    ScenarioKind,
    generate_instance,
    instance_to_dict,
    load_instance,
    reach_probability,
    save_instance,
    scenario_ops,
    scenario_weights,
    validate_instance,
)

from conftest import make_instance


def uniform_job(n_ops, scrap, rework, weight=1.0, due=10):
    ops = tuple(OperationSpec(((1, 1),), scrap, rework) for _ in range(n_ops))
    return Job(1, weight, due, ops)


class TestScenarioWeights:
    def test_five_ops_first_pass_product(self):
        job = uniform_job(5, 0.05, 0.2)
        w = {sw.key: sw.weight for sw in scenario_weights(job)}
        assert w[ScenarioKey(1, ScenarioKind.FIRST_PASS)] == pytest.approx(0.95**5, abs=1e-15)
        assert w[ScenarioKey(1, ScenarioKind.FIRST_PASS)] == pytest.approx(0.7737809375, abs=1e-12)

    def test_first_failure_split(self):
        job = uniform_job(5, 0.05, 0.2)
        w = {sw.key: sw.weight for sw in scenario_weights(job)}
        assert w[ScenarioKey(1, ScenarioKind.REWORK, 1)] == pytest.approx(0.05 * 0.2, abs=1e-15)
        assert w[ScenarioKey(1, ScenarioKind.DISCARD, 1)] == pytest.approx(0.05 * 0.8, abs=1e-15)

    def test_no_defects_degenerate(self):
        job = uniform_job(3, 0.0, 0.7)
        w = {sw.key: sw.weight for sw in scenario_weights(job)}
        assert w[ScenarioKey(1, ScenarioKind.FIRST_PASS)] == 1.0
        assert all(v == 0.0 for k, v in w.items() if k.kind is not ScenarioKind.FIRST_PASS)

    def test_count_and_order(self):
        job = uniform_job(4, 0.1, 0.3)
        sws = scenario_weights(job)
        assert len(sws) == 1 + 2 * 4
        assert sws[0].key.kind is ScenarioKind.FIRST_PASS

    def test_normalization_over_random_draws(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n_ops = int(rng.integers(1, 7))
            ops = tuple(
                OperationSpec(((1, 1),), float(rng.uniform(0, 0.999)), float(rng.uniform(0, 1)))
                for _ in range(n_ops)
            )
            job = Job(1, 1.0, 5, ops)
            sws = scenario_weights(job)
            assert all(sw.weight >= 0 for sw in sws)
            assert sum(sw.weight for sw in sws) == pytest.approx(1.0, abs=1e-12)

    def test_reach_probability_matches_partial_products(self):
        job = uniform_job(4, 0.1, 0.5)
        for j in range(1, 5):
            assert reach_probability(job, j) == pytest.approx(0.9 ** (j - 1), abs=1e-15)

    def test_rework_scenario_ops_start_at_failure(self):
        job = uniform_job(4, 0.1, 0.5)
        assert scenario_ops(job, ScenarioKey(1, ScenarioKind.REWORK, 3)) == (3, 4)
        assert scenario_ops(job, ScenarioKey(1, ScenarioKind.DISCARD, 3)) == (1, 2, 3, 4)


class TestValidation:
    def test_clean_instance_passes(self):
        inst = make_instance([(1.0, 5, [([(1, 2)], 0.1, 0.5)])], [1], horizon=20)
        assert validate_instance(inst) == []

    def test_zero_capacity_named(self):
        inst = make_instance([(1.0, 5, [([(1, 2)], 0.1, 0.5)])], [0], horizon=20)
        problems = validate_instance(inst)
        assert any("MachineGroup.capacity" in p for p in problems)

    def test_empty_eligible_named(self):
        inst = make_instance([(1.0, 5, [([], 0.1, 0.5)])], [1], horizon=20)
        problems = validate_instance(inst)
        assert any("OperationSpec.eligible" in p for p in problems)

    def test_unknown_group_reference(self):
        inst = make_instance([(1.0, 5, [([(9, 2)], 0.1, 0.5)])], [1], horizon=20)
        assert any("unknown group 9" in p for p in validate_instance(inst))

    def test_horizon_too_small_for_single_job(self):
        inst = make_instance([(1.0, 5, [([(1, 6)], 0.1, 0.5)])], [1], horizon=10, shift=4)
        assert any("Instance.horizon" in p for p in validate_instance(inst))


class TestGeneration:
    def test_deterministic_for_seed(self):
        a = generate_instance(5, 3, 2, (1, 5), (5, 20), [1, 2], 0.05, 0.2, seed=42)
        b = generate_instance(5, 3, 2, (1, 5), (5, 20), [1, 2], 0.05, 0.2, seed=42)
        assert a == b
        assert json.dumps(instance_to_dict(a)) == json.dumps(instance_to_dict(b))

    def test_different_seeds_differ(self):
        a = generate_instance(5, 3, 2, (1, 5), (5, 20), [1, 2], 0.05, 0.2, seed=1)
        b = generate_instance(5, 3, 2, (1, 5), (5, 20), [1, 2], 0.05, 0.2, seed=2)
        assert a != b

    def test_degenerate_proc_range(self):
        inst = generate_instance(4, 2, 2, (3, 3), (5, 15), [1, 1], 0.05, 0.2, seed=0)
        for job in inst.jobs:
            for op in job.operations:
                assert all(p == 3 for _, p in op.eligible)

    def test_ranges_respected(self):
        inst = generate_instance(30, 5, 5, (1, 5), (10, 40), [2, 3, 2, 2, 3], 0.05, 0.2, seed=3)
        for job in inst.jobs:
            assert 10 <= job.due_date <= 40
            for op in job.operations:
                assert all(1 <= p <= 5 for _, p in op.eligible)
        assert validate_instance(inst) == []

    def test_capacity_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            generate_instance(5, 3, 2, (1, 5), (5, 20), [1, 2, 3], 0.05, 0.2, seed=0)

    def test_cyclic_single_group_eligibility(self):
        inst = generate_instance(2, 5, 5, (1, 5), (10, 40), [1] * 5, 0.05, 0.2, seed=0)
        for job in inst.jobs:
            for j, op in enumerate(job.operations, start=1):
                assert op.eligible_groups == (j,)


class TestPersistence:
    def test_round_trip_identity(self, tmp_path):
        inst = generate_instance(6, 3, 3, (1, 4), (5, 25), [1, 2, 1], 0.08, 0.3, seed=11)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        assert load_instance(path) == inst

    def test_integer_fields_bit_exact(self, tmp_path):
        inst = generate_instance(4, 2, 2, (1, 5), (5, 20), [2, 1], 0.05, 0.2, seed=5)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        doc = json.loads(path.read_text())
        assert doc["horizon"] == inst.horizon
        assert doc["jobs"][2]["due_date"] == inst.jobs[2].due_date
        assert isinstance(doc["jobs"][0]["operations"][0]["eligible"][0]["proc_time"], int)

    def test_missing_jobs_field_named(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"schema_version": 1, "machine_groups": [], "horizon": 10, "shift_length": 4}')
        with pytest.raises(InstanceFormatError, match="jobs"):
            load_instance(path)

    def test_malformed_json_has_location(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"jobs": [,]}')
        with pytest.raises(InstanceFormatError, match="line"):
            load_instance(path)

    def test_unknown_fields_warn_but_load(self, tmp_path):
        inst = generate_instance(2, 2, 2, (1, 3), (5, 15), [1, 1], 0.05, 0.2, seed=9)
        doc = instance_to_dict(inst)
        doc["future_extension"] = {"x": 1}
        path = tmp_path / "inst.json"
        path.write_text(json.dumps(doc))
        with pytest.warns(UserWarning, match="future_extension"):
            loaded = load_instance(path)
        assert loaded == inst

    def test_schema_version_mismatch(self, tmp_path):
        inst = generate_instance(2, 2, 2, (1, 3), (5, 15), [1, 1], 0.05, 0.2, seed=9)
        doc = instance_to_dict(inst)
        doc["schema_version"] = 99
        path = tmp_path / "inst.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(InstanceFormatError, match="schema_version"):
            load_instance(path)

    def test_job_level_probability_broadcast(self, tmp_path):
        doc = {
            "schema_version": 1,
            "horizon": 30,
            "shift_length": 4,
            "machine_groups": [{"id": 1, "capacity": 1}],
            "jobs": [
                {
                    "id": 1,
                    "weight": 1.0,
                    "due_date": 5,
                    "scrap_prob": 0.07,
                    "rework_prob": 0.4,
                    "operations": [
                        {"eligible": [{"group": 1, "proc_time": 2}]},
                        {"eligible": [{"group": 1, "proc_time": 1}], "scrap_prob": 0.2, "rework_prob": 0.9},
                    ],
                }
            ],
        }
        path = tmp_path / "inst.json"
        path.write_text(json.dumps(doc))
        inst = load_instance(path)
        assert inst.jobs[0].operations[0].scrap_prob == 0.07
        assert inst.jobs[0].operations[1].scrap_prob == 0.2
        assert inst.jobs[0].operations[1].rework_prob == 0.9
