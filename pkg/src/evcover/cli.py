"""Command-line entry point: generate datasets, solve manifests, aggregate
reports, run the growth-function comparison, export formulations.

Every command is deterministic given its inputs, seed and config (solver
wall times excepted). Outputs are plain files: instances and manifests as
JSON, rows and reports as CSV, models as LP text, per-node results as CSV
and GeoJSON. Exit code 2 flags runs in which at least one instance was
skipped because a prerequisite (usually the solver) was missing.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .covering import build_coverage, evaluate, gap
from .datasets import (DatasetSpec, generate_dataset, read_manifest,
                       write_manifest)
from .exact import EnumerationCapExceeded, brute_force_optimum
from .growth import (GfSolution, adjust_solution_max_outlets, build_gf_instance,
                     extract_gf_solution, generate_growth_function, gf_forward_recursion,
                     gf_solution_as_x, load_growth, per_node_ev, save_growth,
                     write_node_ev_csv)
from .heuristics import (GraspConfig, GreedyConfig, HeuristicError, RollingHorizonConfig,
                         grasp, greedy, rolling_horizon)
from .instance import Instance, SolutionX, load_instance, save_instance
from .milp import build_gf, build_mc, build_sl, compute_bounds, extract_solution_x
from .network import generate_network, load_network, save_network
from .lp_io import export_lp
from .solver import resolve_solver_command, solve_external

METHODS = ("exact-enum", "mc-external", "sl-external", "greedy-m", "greedy-h",
           "grasp-m", "grasp-h", "rh-even", "rh-geom")

DEFAULT_TIME_LIMIT = 7200.0
BEST_EQUAL_TOL = 1e-9

ROW_FIELDS = ["instance", "method", "status", "f", "wall_time_s", "termination", "detail"]


# -- report aggregation ------------------------------------------------------------


def nearest_rank_percentile(values, p):
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    vals = sorted(values)
    if not vals:
        raise ValueError("no values")
    rank = math.ceil(p / 100.0 * len(vals))
    rank = min(max(rank, 1), len(vals))
    return vals[rank - 1]


class RunReport:
    """Per-instance rows plus per-method aggregates (times, gaps, # of best)."""

    def __init__(self, rows):
        self.rows = [dict(r) for r in rows]

    def aggregates(self):
        solved = [r for r in self.rows if r["status"] == "ok"]
        best_by_instance = {}
        for r in solved:
            key = r["instance"]
            best_by_instance[key] = max(best_by_instance.get(key, -np.inf), float(r["f"]))
        per_method = {}
        for r in solved:
            per_method.setdefault(r["method"], []).append(r)
        out = {}
        for method, rows in sorted(per_method.items()):
            gaps, times, n_best = [], [], 0
            for r in rows:
                best = best_by_instance[r["instance"]]
                f = float(r["f"])
                gaps.append(gap(best, f) if best > 0 else 0.0)
                times.append(float(r["wall_time_s"]))
                if abs(f - best) <= BEST_EQUAL_TOL:
                    n_best += 1
            out[method] = {
                "n": len(rows),
                "gap_p5": nearest_rank_percentile(gaps, 5),
                "gap_avg": float(np.mean(gaps)),
                "gap_median": float(np.median(gaps)),
                "gap_p95": nearest_rank_percentile(gaps, 95),
                "n_best": n_best,
                "time_p5": nearest_rank_percentile(times, 5),
                "time_avg": float(np.mean(times)),
                "time_p95": nearest_rank_percentile(times, 95),
            }
        return out

    @property
    def skipped(self):
        return [r for r in self.rows if r["status"] != "ok"]


def write_rows_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in ROW_FIELDS})


def read_rows_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_report_csv(path, aggregates):
    cols = ["method", "n", "gap_p5", "gap_avg", "gap_median", "gap_p95", "n_best",
            "time_p5", "time_avg", "time_p95"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for method, agg in aggregates.items():
            w.writerow([method] + [agg[c] for c in cols[1:]])


# -- solution files -----------------------------------------------------------------


def save_solution(path, instance_name, method, x: SolutionX, f, extra=None):
    doc = {"schema": "evcover-solution-v1", "instance": instance_name, "method": method,
           "f": f, "levels": x.levels.tolist(), **(extra or {})}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


# -- method dispatch ----------------------------------------------------------------


def run_method(instance: Instance, coverage, method, *, time_limit=DEFAULT_TIME_LIMIT,
               solver_cmd=None, alpha=0.85, seed=0, improvement_mode="first",
               mode=None, allocation=None):
    """Run one solve method; returns a HeuristicResult-shaped tuple
    (x, f, wall_time, termination, detail, trace). `mode` and `allocation`
    override the variant encoded in the method name."""
    start = time.perf_counter()
    if method == "exact-enum":
        x, f = brute_force_optimum(instance, coverage)
        return x, f, time.perf_counter() - start, "completed", "", []
    if method in ("mc-external", "sl-external"):
        command = resolve_solver_command(solver_cmd)
        if command is None:
            raise HeuristicError("external solver not configured")
        if method == "mc-external":
            model = build_mc(instance, coverage)
        else:
            model = build_sl(instance, compute_bounds(instance))
        result = solve_external(model, command, time_limit_s=time_limit)
        if not result.ok:
            raise HeuristicError(f"solver status {result.status}: {result.detail}")
        x = extract_solution_x(instance, result.values)
        f = evaluate(instance, coverage, x)
        return x, f, time.perf_counter() - start, result.status, "", []
    if method in ("greedy-m", "greedy-h"):
        cfg = GreedyConfig(mode=mode or ("myopic" if method.endswith("-m") else "hyperoptic"))
        res = greedy(instance, coverage, cfg)
        return res.x, res.f, res.wall_time, res.termination, "", res.trace
    if method in ("grasp-m", "grasp-h"):
        cfg = GraspConfig(alpha=alpha,
                          mode=mode or ("myopic" if method.endswith("-m") else "hyperoptic"),
                          time_limit_s=time_limit, seed=seed,
                          improvement_mode=improvement_mode)
        res = grasp(instance, coverage, cfg)
        return res.x, res.f, res.wall_time, res.termination, "", res.trace
    if method in ("rh-even", "rh-geom"):
        cfg = RollingHorizonConfig(
            allocation=allocation or ("even" if method == "rh-even" else "geometric"),
            total_time_limit_s=time_limit)
        res = rolling_horizon(instance, coverage, cfg, solver=solver_cmd)
        return res.x, res.f, res.wall_time, res.termination, "", res.trace
    raise ValueError(f"unknown method {method!r}")


def _solve_one(args):
    path, method, options = args
    name = os.path.splitext(os.path.basename(path))[0]
    try:
        inst = load_instance(path)
        cov = build_coverage(inst)
        x, f, wall, termination, detail, trace = run_method(inst, cov, method, **options)
    except (HeuristicError, EnumerationCapExceeded) as exc:
        return {"instance": name, "method": method, "status": "skipped", "f": "",
                "wall_time_s": "", "termination": "", "detail": str(exc)}, None
    sol = {"instance": name, "method": method, "f": f, "x_levels": x.levels.tolist(),
           "trace": trace}
    return {"instance": name, "method": method, "status": "ok", "f": f,
            "wall_time_s": wall, "termination": termination, "detail": detail}, sol


# -- commands ------------------------------------------------------------------------


def cmd_generate(args):
    if args.network:
        net = load_network(args.network)
    else:
        net = generate_network(args.nodes, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_network(net, os.path.join(args.out, "network.csv"))
    spec = DatasetSpec(kind=args.kind, network=net, instance_count=args.count,
                       base_seed=args.seed)
    entries = []
    for inst in generate_dataset(spec):
        idx = inst.metadata["instance_index"]
        fname = f"instance_{idx:03d}.json"
        save_instance(inst, os.path.join(args.out, fname))
        entries.append({"path": fname, "seed": spec.base_seed, "index": idx})
    manifest = write_manifest(args.out, args.kind, args.seed, entries)
    print(f"wrote {len(entries)} instance(s) and {manifest}")
    return 0


def _manifest_paths(manifest_path):
    doc = read_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    return [os.path.join(root, e["path"]) for e in doc["instances"]], doc


def cmd_solve(args):
    paths, _ = _manifest_paths(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    options = {"time_limit": args.time_limit, "solver_cmd": args.solver_cmd,
               "alpha": args.alpha, "seed": args.seed, "mode": args.mode,
               "allocation": args.allocation}
    tasks = [(p, args.method, options) for p in paths]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]
    rows = []
    for row, sol in results:
        rows.append(row)
        if sol is not None:
            trace = sol.pop("trace")
            sol_path = os.path.join(args.out, f"{sol['instance']}.{args.method}.solution.json")
            with open(sol_path, "w", encoding="utf-8") as fh:
                json.dump(sol, fh, sort_keys=True, default=float)
            trace_path = os.path.join(args.out, f"{sol['instance']}.{args.method}.trace.jsonl")
            with open(trace_path, "w", encoding="utf-8") as fh:
                for entry in trace:
                    fh.write(json.dumps(entry, sort_keys=True, default=float) + "\n")
    rows_path = os.path.join(args.out, f"rows.{args.method}.csv")
    write_rows_csv(rows_path, rows)
    n_skipped = sum(1 for r in rows if r["status"] != "ok")
    print(f"{args.method}: {len(rows) - n_skipped} solved, {n_skipped} skipped -> {rows_path}")
    for r in rows:
        if r["status"] != "ok":
            print(f"  skipped {r['instance']}: {r['detail']}")
    return 2 if n_skipped else 0


def cmd_report(args):
    rows = []
    for path in args.rows:
        rows.extend(read_rows_csv(path))
    if not rows:
        print("no rows", file=sys.stderr)
        return 1
    report = RunReport(rows)
    agg = report.aggregates()
    write_report_csv(args.out, agg)
    header = f"{'method':<14} {'n':>3} {'gap%_p5':>8} {'gap%_avg':>9} {'gap%_p95':>9} " \
             f"{'#best':>5} {'t_p5':>8} {'t_avg':>8} {'t_p95':>8}"
    print(header)
    for method, a in agg.items():
        print(f"{method:<14} {a['n']:>3} {a['gap_p5']:>8.3f} {a['gap_avg']:>9.3f} "
              f"{a['gap_p95']:>9.3f} {a['n_best']:>5} {a['time_p5']:>8.2f} "
              f"{a['time_avg']:>8.2f} {a['time_p95']:>8.2f}")
    if report.skipped:
        print(f"({len(report.skipped)} skipped rows excluded)")
    print(f"report -> {args.out}")
    return 0


def write_node_geojson(instance, node_ev, path):
    feats = []
    for node in instance.network.nodes:
        ev = float(node_ev.get(node.id, 0.0))
        pct = 100.0 * ev / node.population if node.population > 0 else 0.0
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [node.x, node.y]},
            "properties": {"node_id": node.id, "population": node.population,
                           "ev": ev, "ev_pct": pct},
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh)


def _solve_gf_model(gf_inst, solver_cmd, time_limit):
    command = resolve_solver_command(solver_cmd)
    if command is not None:
        model = build_gf(gf_inst)
        result = solve_external(model, command, time_limit_s=time_limit)
        if result.ok:
            return extract_gf_solution(gf_inst, result.values)
        raise HeuristicError(f"GF solve failed: {result.status} {result.detail}")
    return _solve_gf_by_enumeration(gf_inst)


def _gf_schedule_options(gf_inst, base, t):
    """Outlet vectors >= base affordable in period t (opening cost included)."""
    J = len(gf_inst.station_ids)
    out = []

    def cost_of(j, lo, hi):
        c = gf_inst.outlet_cost * (hi - lo)
        if lo == 0 and hi > 0 and gf_inst.initial_outlets[j] == 0:
            c += gf_inst.opening_cost[j]
        return c

    def extend(j, current, spent):
        if j == J:
            out.append(tuple(current))
            return
        for lv in range(base[j], int(gf_inst.max_outlets[j]) + 1):
            c = cost_of(j, base[j], lv)
            if spent + c > gf_inst.budgets[t] + 1e-9:
                break
            current.append(lv)
            extend(j + 1, current, spent + c)
            current.pop()

    extend(0, [], 0.0)
    return out


def _solve_gf_by_enumeration(gf_inst, cap=200_000):
    """Exhaustive search over cumulative outlet schedules with loads resolved
    by the forward recursion; only viable at desk scale."""
    T = gf_inst.horizon
    best, best_total = None, -np.inf
    count = 0

    def walk(t, levels):
        nonlocal best, best_total, count
        if t == T:
            outlets = np.array(levels, dtype=int).T  # (J, T) cumulative
            sol = GfSolution(open=outlets > 0, outlets=outlets)
            outcome = gf_forward_recursion(gf_inst, sol)
            if outcome.yearly_totals[-1] > best_total:
                best_total = outcome.yearly_totals[-1]
                best = sol
            return
        base = levels[-1] if levels else tuple(int(v) for v in gf_inst.initial_outlets)
        for opt in _gf_schedule_options(gf_inst, base, t):
            count += 1
            if count > cap:
                raise HeuristicError("GF enumeration exceeds the desk-scale cap")
            levels.append(opt)
            walk(t + 1, levels)
            levels.pop()

    walk(0, [])
    return best


def cmd_compare_gf(args):
    paths, _ = _manifest_paths(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    instances = [load_instance(p) for p in paths]
    coverages = [build_coverage(inst) for inst in instances]

    # reference covering solution drives the growth function
    ref = greedy(instances[0], coverages[0], GreedyConfig(mode="hyperoptic")).x
    gf_curve = generate_growth_function(instances, ref, coverages)
    save_growth(gf_curve, os.path.join(args.out, "growth_function.csv"))

    gf_inst = build_gf_instance(instances[0], gf_curve, radius_km=args.radius)
    gf_sol = _solve_gf_model(gf_inst, args.solver_cmd, args.time_limit)
    x_gf = gf_solution_as_x(gf_inst, gf_sol)
    x_adj = adjust_solution_max_outlets(gf_inst, gf_sol)

    rows = []
    for inst, cov, path in zip(instances, coverages, paths):
        name = os.path.splitext(os.path.basename(path))[0]
        f_gf = evaluate(inst, cov, x_gf)
        f_adj = evaluate(inst, cov, x_adj)
        x_mc, f_mc, _, _, _, _ = run_method(
            inst, cov, args.mc_method, time_limit=args.time_limit,
            solver_cmd=args.solver_cmd, seed=args.seed)
        rows.append({"instance": name, "gf": f_gf, "gf_adjusted": f_adj, "mc": f_mc})
    with open(os.path.join(args.out, "comparison_rows.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["instance", "gf", "gf_adjusted", "mc"])
        w.writeheader()
        w.writerows(rows)

    summary_path = os.path.join(args.out, "comparison_summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "GF", "GF (Adjusted)", "MC"])
        for stat, p in (("5th percentile", 5), ("Median", 50), ("95th percentile", 95)):
            w.writerow([stat] + [
                nearest_rank_percentile([r[c] for r in rows], p)
                for c in ("gf", "gf_adjusted", "mc")
            ])

    # per-node maps for the first instance, both model semantics
    outcome = gf_forward_recursion(gf_inst, gf_sol)
    write_node_ev_csv(instances[0], outcome.node_ev,
                      os.path.join(args.out, "nodes_gf.csv"))
    mc_x, _, _, _, _, _ = run_method(instances[0], coverages[0], args.mc_method,
                                  time_limit=args.time_limit, solver_cmd=args.solver_cmd,
                                  seed=args.seed)
    mc_nodes = per_node_ev(instances[0], coverages[0], mc_x)
    write_node_ev_csv(instances[0], mc_nodes, os.path.join(args.out, "nodes_mc.csv"))
    write_node_geojson(instances[0], mc_nodes, os.path.join(args.out, "nodes_mc.geojson"))
    print(f"comparison -> {summary_path}")
    return 0


def cmd_export(args):
    inst = load_instance(args.instance)
    if args.formulation == "mc":
        model = build_mc(inst, build_coverage(inst))
    elif args.formulation == "sl":
        model = build_sl(inst, compute_bounds(inst))
    else:
        if not args.growth:
            print("gf export needs --growth FILE", file=sys.stderr)
            return 1
        gf_inst = build_gf_instance(inst, load_growth(args.growth), radius_km=args.radius)
        model = build_gf(gf_inst)
    export_lp(model, args.out)
    print(f"{args.formulation}: {model.n_variables} variables, {model.n_rows} constraints "
          f"-> {args.out}")
    return 0


# -- argument parsing -----------------------------------------------------------------


def make_parser():
    p = argparse.ArgumentParser(prog="evcover",
                                description="EV charging-station placement toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset and manifest")
    g.add_argument("kind", choices=["Simple", "Distance", "HomeCharging", "LongSpan", "Price"])
    g.add_argument("--nodes", type=int, default=40, help="synthetic network size")
    g.add_argument("--network", help="use this network file instead of generating one")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one method over a manifest")
    s.add_argument("manifest")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--time-limit", type=float, default=DEFAULT_TIME_LIMIT)
    s.add_argument("--solver-cmd", default=None,
                   help="command template with {lp_path} {sol_path} {time_limit}; "
                        "'none' disables the solver")
    s.add_argument("--alpha", type=float, default=0.85)
    s.add_argument("--mode", choices=["myopic", "hyperoptic"], default=None,
                   help="override the search mode encoded in the method name")
    s.add_argument("--allocation", choices=["even", "geometric"], default=None,
                   help="override the rolling-horizon time allocation")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("report", help="aggregate rows CSVs into a report")
    r.add_argument("rows", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("compare-gf", help="growth-function vs covering comparison")
    c.add_argument("manifest")
    c.add_argument("--out", required=True)
    c.add_argument("--time-limit", type=float, default=DEFAULT_TIME_LIMIT)
    c.add_argument("--solver-cmd", default=None)
    c.add_argument("--mc-method", choices=METHODS, default="greedy-h")
    c.add_argument("--radius", type=float, default=10.0)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_compare_gf)

    e = sub.add_parser("export", help="build and export one formulation as LP")
    e.add_argument("instance")
    e.add_argument("--formulation", choices=["mc", "sl", "gf"], required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--growth", help="growth-function CSV (gf only)")
    e.add_argument("--radius", type=float, default=10.0)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
