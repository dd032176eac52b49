"""Instances, failure outcomes, and their probability algebra.

A job is a chain of operations on machine groups. After every operation the
part may be damaged: it is then either reworked (redo the failed operation
and everything after it) or discarded (rebuild from operation 1). A plan
therefore carries one schedule for the clean first pass plus one restart
schedule per (failed operation, rework-or-discard) outcome, and the outcome
probabilities weight everything: the objective, and machine usage.
"""

import numpy as np

from shopsched import generate_instance, scenario_weights, validate_instance
from shopsched.instance import ScenarioKind, save_instance

rng_seed = 7

inst = generate_instance(
    n_jobs=4,
    ops_per_job=3,
    n_groups=3,
    proc_range=(1, 4),
    due_range=(8, 20),
    capacities=[1, 2, 1],
    scrap=0.08,
    rework=0.4,
    seed=rng_seed,
)
print(f"generated {len(inst.jobs)} jobs, horizon {inst.horizon}, shift {inst.shift_length}")
print("validation:", validate_instance(inst) or "clean")

job = inst.jobs[0]
print(f"\njob {job.id}: weight {job.weight}, due {job.due_date}")
for j, op in enumerate(job.operations, start=1):
    print(f"  op {j}: eligible {op.eligible}, scrap {op.scrap_prob}, rework {op.rework_prob}")

print("\noutcome probabilities (they always sum to 1):")
total = 0.0
for sw in scenario_weights(job):
    kind = sw.key.kind.value
    tag = kind if sw.key.kind is ScenarioKind.FIRST_PASS else f"{kind} after op {sw.key.fail_op}"
    print(f"  {tag:24s} {sw.weight:.6f}")
    total += sw.weight
print(f"  {'total':24s} {total:.12f}")

# the telescoping holds for arbitrary probability data
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(1000):
    probe = generate_instance(
        1, 4, 1, (1, 2), (5, 10), [1],
        scrap=float(rng.uniform(0, 0.9)),
        rework=float(rng.uniform(0, 1)),
        seed=int(rng.integers(1 << 31)),
    )
    worst = max(worst, abs(sum(sw.weight for sw in scenario_weights(probe.jobs[0])) - 1.0))
print(f"\nworst |sum - 1| over 1000 random probability draws: {worst:.2e}")

path = save_instance(inst, "demo_instance.json")
print(f"\nwrote {path}")
