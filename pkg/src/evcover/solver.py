"""External MILP solver adapter, plus a bundled LP-file solver.

The adapter runs any solver that accepts an LP file and writes a solution
file, through a command template with {lp_path}, {sol_path} and {time_limit}
placeholders, e.g.

    cbc {lp_path} sec {time_limit} solve solu {sol_path}

The template is taken from the call, else from the EVCOVER_SOLVER_CMD
environment variable, else it falls back to the bundled solver below. Set
EVCOVER_SOLVER_CMD=none to declare that no solver is available; callers
then receive a 'not-configured' status and can skip or fall back.

Bundled solver: `python -m evcover.solver LP SOL TIME_LIMIT` (also installed
as `evcover-lp-solve`) parses the emitted LP dialect and solves it with
scipy's HiGHS-backed MILP routine at zero MIP gap, writing a name/value
solution file.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .lp_io import export_lp, parse_lp, parse_solution_file, write_solution_pairs
from .milp import CONTINUOUS, MilpModel

SOLVER_ENV_VAR = "EVCOVER_SOLVER_CMD"
NOT_CONFIGURED = "none"

STATUS_OPTIMAL = "optimal"
STATUS_TIMEOUT = "feasible-timeout"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ERROR = "error"
STATUS_NOT_CONFIGURED = "not-configured"


@dataclass
class SolveResult:
    status: str
    objective: float | None = None
    values: dict = field(default_factory=dict)
    wall_time: float = 0.0
    detail: str = ""

    @property
    def ok(self):
        return self.status in (STATUS_OPTIMAL, STATUS_TIMEOUT)


def bundled_solver_command():
    return f"{shlex.quote(sys.executable)} -m evcover.solver {{lp_path}} {{sol_path}} {{time_limit}}"


def resolve_solver_command(solver_command=None):
    """Resolve to a command template, or None when solving is disabled."""
    cmd = solver_command if solver_command is not None else os.environ.get(SOLVER_ENV_VAR)
    if cmd is None or cmd == "":
        return bundled_solver_command()
    if cmd.strip().lower() == NOT_CONFIGURED:
        return None
    return cmd


def solve_external(model: MilpModel, solver_command=None, time_limit_s=None,
                   workdir=None) -> SolveResult:
    """Write the model as LP, run the solver subprocess, parse the solution.

    The reported objective includes the model's objective constant (which is
    not representable in LP text).
    """
    command = resolve_solver_command(solver_command)
    if command is None:
        return SolveResult(STATUS_NOT_CONFIGURED, detail="external solver not configured")
    limit = float(time_limit_s) if time_limit_s is not None else 1e7
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        lp_path = os.path.join(tmp, f"{model.name}.lp")
        sol_path = os.path.join(tmp, f"{model.name}.sol")
        export_lp(model, lp_path)
        argv = [
            part.format(lp_path=lp_path, sol_path=sol_path, time_limit=repr(limit))
            for part in shlex.split(command)
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=limit + 60.0)
        except subprocess.TimeoutExpired:
            return SolveResult(STATUS_ERROR, wall_time=time.perf_counter() - start,
                               detail="solver subprocess exceeded the grace timeout")
        except OSError as exc:
            return SolveResult(STATUS_ERROR, wall_time=time.perf_counter() - start,
                               detail=f"could not run solver: {exc}")
        wall = time.perf_counter() - start
        if not os.path.exists(sol_path):
            tail = (proc.stderr or proc.stdout or "")[-400:]
            return SolveResult(STATUS_ERROR, wall_time=wall,
                               detail=f"no solution file (exit {proc.returncode}): {tail}")
        status, objective, values = parse_solution_file(sol_path)
    if status in (STATUS_OPTIMAL, STATUS_TIMEOUT):
        if objective is None:
            objective = sum(model.objective.get(n, 0.0) * v for n, v in values.items())
        objective += model.objective_constant
    return SolveResult(status, objective, values, wall)


# -- bundled LP solver (scipy / HiGHS) -----------------------------------------


def solve_model_inprocess(model: MilpModel, time_limit_s=None):
    """Solve a MilpModel with scipy's MILP (HiGHS) without the subprocess hop.
    Returns (status, objective_without_constant, values)."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_matrix

    model.validate()
    names = [v.name for v in model.variables]
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for name, coef in model.objective.items():
        c[index[name]] = coef
    sign = -1.0 if model.sense == "max" else 1.0

    rows, cols, vals = [], [], []
    lo = np.empty(len(model.rows))
    hi = np.empty(len(model.rows))
    for ri, row in enumerate(model.rows):
        for name, coef in row.coeffs.items():
            rows.append(ri)
            cols.append(index[name])
            vals.append(coef)
        if row.sense == "<=":
            lo[ri], hi[ri] = -np.inf, row.rhs
        elif row.sense == ">=":
            lo[ri], hi[ri] = row.rhs, np.inf
        else:
            lo[ri] = hi[ri] = row.rhs
    A = csr_matrix((vals, (rows, cols)), shape=(len(model.rows), n))

    integrality = np.array(
        [0 if v.kind == CONTINUOUS else 1 for v in model.variables], dtype=np.uint8)
    lb = np.array([v.lb for v in model.variables])
    ub = np.array([v.ub for v in model.variables])
    options = {"mip_rel_gap": 0.0, "presolve": True}
    if time_limit_s is not None:
        options["time_limit"] = float(time_limit_s)
    res = milp(c=sign * c, constraints=LinearConstraint(A, lo, hi),
               integrality=integrality, bounds=Bounds(lb, ub), options=options)

    if res.status == 0:
        status = STATUS_OPTIMAL
    elif res.status == 1 and res.x is not None:
        status = STATUS_TIMEOUT
    elif res.status == 2:
        status = STATUS_INFEASIBLE
    elif res.status == 3:
        status = STATUS_UNBOUNDED
    else:
        status = STATUS_ERROR
    if res.x is None:
        return status, None, {}
    objective = float(sign * res.fun)
    values = {name: float(val) for name, val in zip(names, res.x)}
    return status, objective, values


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) not in (2, 3):
        print("usage: evcover-lp-solve LP_FILE SOL_FILE [TIME_LIMIT_S]", file=sys.stderr)
        return 2
    lp_path, sol_path = argv[0], argv[1]
    time_limit = float(argv[2]) if len(argv) == 3 else None
    try:
        with open(lp_path, "r", encoding="utf-8") as fh:
            model = parse_lp(fh.read())
    except Exception as exc:  # malformed input must not crash silently
        print(f"failed to parse {lp_path}: {exc}", file=sys.stderr)
        return 1
    status, objective, values = solve_model_inprocess(model, time_limit)
    write_solution_pairs(sol_path, status, objective, values)
    return 0


if __name__ == "__main__":
    sys.exit(main())
