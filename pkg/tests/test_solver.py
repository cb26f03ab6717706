import os
import sys

import numpy as np
import pytest

from evcover.covering import build_coverage
from evcover.datasets import generate_small_instance
from evcover.exact import brute_force_optimum
from evcover.milp import BINARY, MilpModel, build_mc, extract_solution_x
from evcover.solver import (STATUS_ERROR, STATUS_INFEASIBLE, STATUS_NOT_CONFIGURED,
                            STATUS_OPTIMAL, STATUS_TIMEOUT, bundled_solver_command,
                            resolve_solver_command, solve_external, solve_model_inprocess)


def infeasible_toy():
    # forced opening with a budget below the opening cost
    m = MilpModel("inf", "max")
    m.add_var("x", 0, 1, BINARY)
    m.add_row("budget", {"x": 150.0}, "<=", 100.0)
    m.add_row("force_open", {"x": 1.0}, ">=", 1.0)
    m.set_objective({"x": 1.0})
    return m


def test_infeasible_toy_status():
    res = solve_external(infeasible_toy(), time_limit_s=30)
    assert res.status == STATUS_INFEASIBLE
    assert not res.ok


def test_mc_toy_matches_brute_force():
    inst = generate_small_instance(71, n_stations=2, max_scenarios=6)
    cov = build_coverage(inst)
    _, f_star = brute_force_optimum(inst, cov)
    res = solve_external(build_mc(inst, cov), time_limit_s=60)
    assert res.status == STATUS_OPTIMAL
    assert res.objective == pytest.approx(f_star, abs=1e-6)
    x = extract_solution_x(inst, res.values)
    from evcover.covering import evaluate
    assert evaluate(inst, cov, x) == pytest.approx(f_star, abs=1e-6)


def test_not_configured_paths(monkeypatch):
    assert resolve_solver_command("none") is None
    monkeypatch.setenv("EVCOVER_SOLVER_CMD", "none")
    assert resolve_solver_command(None) is None
    res = solve_external(infeasible_toy(), solver_command="none")
    assert res.status == STATUS_NOT_CONFIGURED
    assert "not configured" in res.detail
    monkeypatch.setenv("EVCOVER_SOLVER_CMD", "custom {lp_path} {sol_path} {time_limit}")
    assert resolve_solver_command(None).startswith("custom ")
    monkeypatch.delenv("EVCOVER_SOLVER_CMD")
    assert resolve_solver_command(None) == bundled_solver_command()


def test_solver_subprocess_failure_reports_error():
    res = solve_external(infeasible_toy(),
                         solver_command=f"{sys.executable} -c import_sys_exit_1",
                         time_limit_s=5)
    assert res.status == STATUS_ERROR
    assert "no solution file" in res.detail


def test_missing_binary_reports_error():
    res = solve_external(infeasible_toy(),
                         solver_command="definitely-not-a-solver {lp_path} {sol_path}",
                         time_limit_s=5)
    assert res.status == STATUS_ERROR


def test_objective_constant_added_back():
    inst = generate_small_instance(72, n_stations=2, max_scenarios=6)
    cov = build_coverage(inst)
    model = build_mc(inst, cov)
    model.objective_constant = 10.0
    base = solve_external(build_mc(inst, cov), time_limit_s=60)
    shifted = solve_external(model, time_limit_s=60)
    assert shifted.objective == pytest.approx(base.objective + 10.0, abs=1e-6)


def test_status_mapping_inprocess():
    status, obj, values = solve_model_inprocess(infeasible_toy())
    assert status == STATUS_INFEASIBLE
    m = MilpModel("unbounded", "max")
    m.add_var("y")  # default [0, inf)
    m.set_objective({"y": 1.0})
    status, _, _ = solve_model_inprocess(m)
    assert status in ("unbounded", STATUS_ERROR)


def test_timeout_returns_incumbent():
    # hard random packing model; a microscopic limit either times out with an
    # incumbent or (if presolve happens to finish it) proves optimality
    rng = np.random.default_rng(4)
    m = MilpModel("slow", "max")
    n_items, n_rows = 260, 420
    for i in range(n_items):
        m.add_var(f"b{i:03d}", 0, 1, BINARY)
    m.set_objective({f"b{i:03d}": float(rng.integers(1, 100)) for i in range(n_items)})
    for rix in range(n_rows):
        members = rng.choice(n_items, size=14, replace=False)
        m.add_row(f"r{rix:03d}", {f"b{i:03d}": float(rng.integers(1, 9)) for i in members},
                  "<=", float(rng.integers(8, 30)))
    res = solve_external(m, time_limit_s=0.25)
    assert res.status in (STATUS_TIMEOUT, STATUS_OPTIMAL)
    if res.status == STATUS_TIMEOUT:
        assert res.values  # incumbent present
        assert res.objective is not None


def test_bundled_cli_main(tmp_path):
    from evcover.lp_io import export_lp, parse_solution_file
    from evcover.solver import main
    lp = tmp_path / "m.lp"
    sol = tmp_path / "m.sol"
    export_lp(infeasible_toy(), lp)
    assert main([str(lp), str(sol), "10"]) == 0
    status, _, _ = parse_solution_file(sol)
    assert status == STATUS_INFEASIBLE
    assert main([str(tmp_path / "missing.lp"), str(sol)]) == 1
