"""Command-line front end.

Subcommands: ``generate`` (random instance files), ``solve`` (run the
decomposition engine and write solution/convergence/Gantt artifacts),
``validate`` (re-check a solution file), ``evaluate`` (exact vs sampled
expected tardiness), ``bench`` (the 20-job benchmark family and its
reseeded robustness cases, emitting a per-case results CSV).

Every flag can also be set through an environment variable with the
``SHOPSCHED_`` prefix (dashes become underscores, e.g. ``--target-gap``
reads ``SHOPSCHED_TARGET_GAP``); explicit flags win.

Exit codes: 0 success; 2 invalid configuration or input; 3 infeasible
instance or failed validation; 4 finished without any feasible schedule.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .dual import Engine, HyperParams
from .feasibility import (
    check_feasible,
    compute_gap,
    read_solution_file,
    write_convergence_csv,
    write_gantt_csv,
    write_solution_file,
)
from .formulation import evaluate_objective
from .instance import (
    Instance,
    InstanceFormatError,
    generate_instance,
    load_instance,
    save_instance,
    validate_instance,
)
from .milp.backend import make_backend
from .simulate import FULL_MARKOV, SINGLE_FAILURE, exact_expected_tardiness, monte_carlo_tardiness, write_evaluation_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NO_FEASIBLE = 4

ENV_PREFIX = "SHOPSCHED_"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _env_default(flag: str, fallback):
    return os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"), fallback)


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    g.add_argument("--gamma", type=float, default=_env_default("gamma", 0.5))
    g.add_argument("--zeta", type=float, default=_env_default("zeta", 0.95))
    g.add_argument("--beta", type=float, default=_env_default("beta", None))
    g.add_argument("--rho0", type=float, default=_env_default("rho0", 0.0))
    g.add_argument("--rho-max", type=float, default=_env_default("rho-max", 10.0))
    g.add_argument("--eps-violation", type=float, default=_env_default("eps-violation", None))
    g.add_argument("--delta", type=int, default=_env_default("delta", 2))
    g.add_argument("--delta-max", type=int, default=_env_default("delta-max", None))
    g.add_argument("--target-gap", type=float, default=_env_default("target-gap", 0.10))
    g.add_argument("--time-limit", type=float, default=_env_default("time-limit", 600.0))
    g.add_argument("--backend", choices=["builtin", "external"], default=_env_default("backend", "builtin"))
    g.add_argument("--solver-cmd", default=_env_default("solver-cmd", None), metavar="TEMPLATE",
                   help="external command with {model} and {solution} placeholders")
    g.add_argument("--bound-every", type=int, default=_env_default("bound-every", 20))
    g.add_argument("--repair-every", type=int, default=_env_default("repair-every", 25))
    g.add_argument("--subproblem-budget", type=float, default=_env_default("subproblem-budget", 10.0))
    g.add_argument("--bound-budget", type=float, default=_env_default("bound-budget", 20.0))
    g.add_argument("--repair-budget", type=float, default=_env_default("repair-budget", 60.0))


def _params_from(args) -> HyperParams:
    try:
        return HyperParams(
            gamma=float(args.gamma),
            zeta=float(args.zeta),
            beta=None if args.beta in (None, "") else float(args.beta),
            rho0=float(args.rho0),
            rho_max=float(args.rho_max),
            violation_tol=None if args.eps_violation in (None, "") else float(args.eps_violation),
            delta=int(args.delta),
            delta_max=None if args.delta_max in (None, "") else int(args.delta_max),
            bound_every=int(args.bound_every),
            repair_every=int(args.repair_every),
            subproblem_budget=float(args.subproblem_budget),
            bound_budget=float(args.bound_budget),
            repair_budget=float(args.repair_budget),
        )
    except ValueError as exc:
        raise CliError(f"invalid engine configuration: {exc}") from exc


def _load(path: str) -> Instance:
    try:
        inst = load_instance(path)
    except FileNotFoundError as exc:
        raise CliError(f"instance file not found: {path}") from exc
    except InstanceFormatError as exc:
        raise CliError(f"cannot parse instance: {exc}") from exc
    problems = validate_instance(inst)
    if problems:
        raise CliError("invalid instance: " + "; ".join(problems), EXIT_INFEASIBLE)
    return inst


def _target_gap(args) -> float:
    gap = float(args.target_gap)
    if not (0.0 < gap <= 1.0):
        raise CliError(f"target gap {gap} outside (0, 1]")
    return gap


def _time_limit(args) -> float:
    tl = float(args.time_limit)
    if tl <= 0:
        raise CliError(f"time limit {tl} must be positive")
    return tl


def example1_instance() -> Instance:
    """The canonical 20-job, 5-operation, 5-group benchmark instance."""
    with resources.files("shopsched.data").joinpath("example1.json").open("r") as f:
        from .instance import instance_from_dict

        return instance_from_dict(json.load(f), where="example1.json")


def _solve_one(inst: Instance, args, out_dir: Path, label: str) -> dict:
    backend = make_backend(args.backend, args.solver_cmd)
    engine = Engine(inst, backend, _params_from(args), _target_gap(args), _time_limit(args))
    report = engine.run()
    gap = compute_gap(report.best_feasible, report.best_bound, provenance=f"k={report.bound_iteration}")
    meta = {
        "label": label,
        "version": __version__,
        "backend": args.backend,
        "stop_reason": report.stop_reason,
        "iterations": report.iterations,
        "wall_time": report.wall_time,
        "level_updates": report.level_updates,
        "repairs": report.repairs,
        "target_gap": _target_gap(args),
        "hyperparams": {
            "gamma": report.params.gamma,
            "zeta": report.params.zeta,
            "beta": report.params.beta,
            "rho0": report.params.rho0,
            "rho_max": report.params.rho_max,
            "violation_tol": report.params.violation_tol,
            "delta": report.params.delta,
            "delta_max": report.params.delta_max,
            "bound_every": report.params.bound_every,
        },
        "seed": getattr(args, "seed", None),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    write_solution_file(out_dir / f"{label}.solution.json", inst, report.best_schedule,
                        report.best_feasible, report.best_bound, gap, meta)
    write_convergence_csv(out_dir / f"{label}.convergence.csv", report.trace)
    write_gantt_csv(out_dir / f"{label}.gantt.csv", inst, report.best_schedule)
    return {
        "label": label,
        "feasible": report.best_feasible,
        "bound": report.best_bound,
        "gap": gap.gap,
        "wall_time": report.wall_time,
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    try:
        capacities = [int(x) for x in str(args.capacities).split(",") if x != ""]
    except ValueError as exc:
        raise CliError(f"bad capacities list {args.capacities!r}") from exc
    try:
        inst = generate_instance(
            n_jobs=args.jobs,
            ops_per_job=args.ops,
            n_groups=args.groups,
            proc_range=(args.proc_lo, args.proc_hi),
            due_range=(args.due_lo, args.due_hi),
            capacities=capacities,
            scrap=args.scrap,
            rework=args.rework,
            seed=args.seed,
            shift_length=args.shift,
            horizon=args.horizon,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    problems = validate_instance(inst)
    if problems:
        raise CliError("generated instance invalid: " + "; ".join(problems), EXIT_INFEASIBLE)
    path = save_instance(inst, args.out)
    print(f"wrote {path} ({len(inst.jobs)} jobs, horizon {inst.horizon})")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    out_dir = Path(args.out)
    label = Path(args.instance).stem
    row = _solve_one(inst, args, out_dir, label)
    print(
        f"{label}: feasible {row['feasible']:.4f}, bound {row['bound']:.4f}, "
        f"gap {row['gap']:.2%}, {row['iterations']} iterations, "
        f"{row['wall_time']:.1f}s ({row['stop_reason']})"
    )
    if not np.isfinite(row["feasible"]):
        return EXIT_NO_FEASIBLE
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = _load(args.instance)
    try:
        schedule, doc = read_solution_file(args.solution, inst)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read solution file: {exc}") from exc
    problems = check_feasible(inst, schedule)
    stored = doc.get("objective")
    recomputed = evaluate_objective(inst, schedule)
    if stored is not None and abs(stored - recomputed) > 1e-6 * (1 + abs(recomputed)):
        problems.append(f"objective mismatch: stored {stored}, recomputed {recomputed}")
    if problems:
        print(f"INVALID: {len(problems)} violation(s)")
        for p in problems:
            print(f"  - {p}")
        return EXIT_INFEASIBLE
    print(f"valid: expected tardiness {recomputed:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    inst = _load(args.instance)
    try:
        schedule, _ = read_solution_file(args.solution, inst)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read solution file: {exc}") from exc
    exact = exact_expected_tardiness(inst, schedule)
    formula = evaluate_objective(inst, schedule)
    results = [
        monte_carlo_tardiness(inst, schedule, args.samples, args.seed, SINGLE_FAILURE),
        monte_carlo_tardiness(inst, schedule, min(args.samples, args.markov_samples), args.seed, FULL_MARKOV),
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_evaluation_csv(out / "evaluation.csv", results, exact)
    print(f"objective (formula):    {formula:.9f}")
    print(f"objective (enumerated): {exact:.9f}")
    for r in results:
        z = (r.mean - exact) / r.std_error if r.std_error > 0 else 0.0
        print(f"{r.mode:>16s}: mean {r.mean:.6f} +- {r.std_error:.6f} (N={r.samples}, z={z:+.2f})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.suite != "example1-robustness":
        raise CliError(f"unknown suite {args.suite!r}")
    base = example1_instance()
    cases: list[tuple[str, Instance]] = [("base", base)]
    caps = [g.capacity for g in base.machine_groups]
    for s in range(args.seeds):
        cases.append(
            (
                f"reseed{s + 1}",
                generate_instance(
                    n_jobs=len(base.jobs),
                    ops_per_job=base.jobs[0].n_ops,
                    n_groups=len(base.machine_groups),
                    proc_range=(1, 5),
                    due_range=(10, 40),
                    capacities=caps,
                    scrap=0.05,
                    rework=0.20,
                    seed=args.seed + s,
                    shift_length=base.shift_length,
                ),
            )
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, inst in cases:
        row = _solve_one(inst, args, out_dir, f"bench_{label}")
        rows.append(row)
        print(
            f"{label}: feasible {row['feasible']:.2f}, bound {row['bound']:.2f}, "
            f"gap {row['gap']:.2%}, {row['wall_time']:.1f}s"
        )
    csv_path = out_dir / "bench.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["case", "feasible_cost", "bound", "gap", "wall_time_s", "iterations", "stop_reason"])
        for row in rows:
            feas = float(f"{row['feasible']:.17g}")
            bound = float(f"{row['bound']:.17g}")
            gap = (feas - bound) / feas if feas > 0 else feas - bound
            w.writerow(
                [
                    row["label"],
                    f"{feas:.17g}",
                    f"{bound:.17g}",
                    f"{gap:.17g}",
                    f"{row['wall_time']:.3f}",
                    row["iterations"],
                    row["stop_reason"],
                ]
            )
    print(f"wrote {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shopsched", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"shopsched {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance file")
    g.add_argument("--jobs", type=int, default=20)
    g.add_argument("--ops", type=int, default=5)
    g.add_argument("--groups", type=int, default=5)
    g.add_argument("--proc-lo", type=int, default=1)
    g.add_argument("--proc-hi", type=int, default=5)
    g.add_argument("--due-lo", type=int, default=10)
    g.add_argument("--due-hi", type=int, default=40)
    g.add_argument("--capacities", default="2,3,2,2,3")
    g.add_argument("--scrap", type=float, default=0.05)
    g.add_argument("--rework", type=float, default=0.20)
    g.add_argument("--shift", type=int, default=8)
    g.add_argument("--horizon", type=int, default=None)
    g.add_argument("--seed", type=int, default=_env_default("seed", 0))
    g.add_argument("--out", default="instance.json")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run the decomposition engine on an instance")
    s.add_argument("instance")
    s.add_argument("--seed", type=int, default=_env_default("seed", 0))
    s.add_argument("--out", default=_env_default("out", "runs"))
    _add_engine_flags(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="re-check a solution file against its instance")
    v.add_argument("instance")
    v.add_argument("solution")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("evaluate", help="exact and Monte-Carlo objective cross-check")
    e.add_argument("instance")
    e.add_argument("solution")
    e.add_argument("--samples", type=int, default=200_000)
    e.add_argument("--markov-samples", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=_env_default("seed", 0))
    e.add_argument("--out", default=_env_default("out", "runs"))
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="benchmark family: base case plus reseeded variants")
    b.add_argument("--suite", default="example1-robustness")
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--seed", type=int, default=_env_default("seed", 1000))
    b.add_argument("--out", default=_env_default("out", "bench_out"))
    _add_engine_flags(b)
    b.set_defaults(func=cmd_bench)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        record = {"error": str(exc), "exit_code": exc.code}
        print(json.dumps(record), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
