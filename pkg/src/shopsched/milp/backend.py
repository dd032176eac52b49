"""Solver backends: the built-in branch and bound, and a process adapter
that hands models to any external MILP solver via MPS and solution files.

The external adapter contract: a command template with ``{model}`` and
``{solution}`` placeholders (an optional ``{budget}`` receives the time
budget in seconds); exit code 0 plus a parseable solution file is required,
anything else degrades to the built-in solver with a logged warning.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path

from .model import MilpModel, MilpSolution
from .mps import SolutionFormatError, parse_external_solution, write_mps
from .solve import solve_builtin

log = logging.getLogger(__name__)


class SolverBackend:
    name = "abstract"

    def solve(self, model: MilpModel, budget: float | None = None, warm_start=None) -> MilpSolution:
        raise NotImplementedError


class BuiltinBackend(SolverBackend):
    name = "builtin"

    def __init__(self, node_limit: int | None = None):
        self.node_limit = node_limit

    def solve(self, model: MilpModel, budget: float | None = None, warm_start=None) -> MilpSolution:
        return solve_builtin(model, budget=budget, node_limit=self.node_limit, warm_start=warm_start)


def default_external_command() -> str:
    """Bundled MPS-to-HiGHS bridge, usable as the external solver command."""
    return f"{shlex.quote(sys.executable)} -m shopsched.milp.highs_bridge {{model}} {{solution}} --time-limit {{budget}}"


class ExternalBackend(SolverBackend):
    name = "external"

    def __init__(
        self,
        command_template: str | None = None,
        fallback: SolverBackend | None = None,
        keep_files: bool = False,
    ):
        self.command_template = command_template or default_external_command()
        if "{model}" not in self.command_template or "{solution}" not in self.command_template:
            raise ValueError("external command template needs {model} and {solution} placeholders")
        self.fallback = fallback if fallback is not None else BuiltinBackend()
        self.keep_files = keep_files

    def solve(self, model: MilpModel, budget: float | None = None, warm_start=None) -> MilpSolution:
        # warm starts are not forwarded over the file interface
        with tempfile.TemporaryDirectory(prefix="shopsched_milp_") as tmp:
            mps_path = Path(tmp) / "model.mps"
            sol_path = Path(tmp) / "model.sol"
            write_mps(model, mps_path)
            cmd = self.command_template.format(
                model=shlex.quote(str(mps_path)),
                solution=shlex.quote(str(sol_path)),
                budget=f"{budget if budget is not None else 1e8:g}",
            )
            timeout = budget * 1.5 + 120.0 if budget is not None else None
            try:
                proc = subprocess.run(
                    shlex.split(cmd),
                    capture_output=True,
                    text=True,
                    timeout=timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                log.warning("external solver failed to run (%s); falling back to builtin", exc)
                return self.fallback.solve(model, budget)
            if proc.returncode != 0:
                log.warning(
                    "external solver exited with %d (%s); falling back to builtin",
                    proc.returncode,
                    (proc.stderr or proc.stdout or "").strip()[:200],
                )
                return self.fallback.solve(model, budget)
            try:
                solution = parse_external_solution(sol_path, model)
            except (OSError, SolutionFormatError) as exc:
                log.warning("external solution unusable (%s); falling back to builtin", exc)
                return self.fallback.solve(model, budget)
            if self.keep_files:
                keep = Path(tempfile.mkdtemp(prefix="shopsched_milp_keep_"))
                mps_path.rename(keep / mps_path.name)
                if sol_path.exists():
                    sol_path.rename(keep / sol_path.name)
                log.info("external solver files kept in %s", keep)
            return solution


def make_backend(kind: str, command_template: str | None = None) -> SolverBackend:
    if kind == "builtin":
        return BuiltinBackend()
    if kind == "external":
        return ExternalBackend(command_template)
    raise ValueError(f"unknown backend {kind!r}")
