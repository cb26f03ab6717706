"""Piecewise-linear EV-adoption growth baseline.

The growth function maps the EV penetration at the start of a year (fraction
of the city population) to the penetration at the end of it. It is generated
from covering-model results: per-year covered masses are accumulated per
instance, averaged, normalised by population, interpolated piecewise
linearly, and extended to the whole [0, 1] domain with the last slope
(clamped at 1, floored by the identity so EV counts never shrink).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .covering import CoverageTensor, build_coverage, evaluate, evaluate_per_period
from .instance import Instance, SolutionX


class GrowthError(ValueError):
    pass


class GrowthFunction:
    """Segments s = 1..S with breakpoints q[s-1], q[s], slope m[s], intercept o[s]."""

    def __init__(self, breakpoints, slopes, intercepts, data_range=None):
        self.breakpoints = tuple(float(q) for q in breakpoints)
        self.slopes = tuple(float(m) for m in slopes)
        self.intercepts = tuple(float(o) for o in intercepts)
        self.data_range = data_range
        self.validate()

    def validate(self):
        q, m, o = self.breakpoints, self.slopes, self.intercepts
        if len(q) != len(m) + 1 or len(m) != len(o):
            raise GrowthError("segment arrays have inconsistent lengths")
        if any(b - a <= 0 for a, b in zip(q, q[1:])):
            raise GrowthError("breakpoints must be strictly increasing")
        if abs(q[0]) > 1e-9 or abs(q[-1] - 1.0) > 1e-9:
            raise GrowthError("segments must tile [0, 1]")
        if any(s < -1e-12 for s in m):
            raise GrowthError("growth function must be nondecreasing")
        for s in range(len(m) - 1):
            left = m[s] * q[s + 1] + o[s]
            right = m[s + 1] * q[s + 1] + o[s + 1]
            if abs(left - right) > 1e-9:
                raise GrowthError(f"discontinuity at breakpoint {q[s + 1]}")
        lo, hi = self.data_range if self.data_range else (q[0], q[-1])
        for point in q:
            if lo - 1e-12 <= point <= hi + 1e-12 and self.value(point) < point - 1e-9:
                raise GrowthError(f"g({point}) < identity inside the generated range")

    def segment_of(self, z):
        q = self.breakpoints
        s = int(np.searchsorted(q, z, side="right")) - 1
        return min(max(s, 0), len(self.slopes) - 1)

    def value(self, z):
        """g(z), clamped into [0, 1]; outside the generated data range the
        identity acts as a floor so EV counts never shrink."""
        z = min(max(float(z), 0.0), 1.0)
        s = self.segment_of(z)
        raw = self.slopes[s] * z + self.intercepts[s]
        if self.data_range is not None:
            lo, hi = self.data_range
            if z < lo - 1e-12 or z > hi + 1e-12:
                raw = max(raw, z)
        return min(max(raw, 0.0), 1.0)

    def covers_unit_interval(self):
        return abs(self.breakpoints[0]) <= 1e-9 and abs(self.breakpoints[-1] - 1.0) <= 1e-9

    @classmethod
    def identity(cls):
        return cls((0.0, 1.0), (1.0,), (0.0,), data_range=(0.0, 0.0))


def mc_yearly_totals(instances, candidate: SolutionX, coverages=None):
    """Average cumulative EV totals per year of a candidate over instances.

    Returns (cumulative means, per-instance cumulative matrix): entry [k, t]
    is the EV total at the end of year t+1 in instance k, starting from zero
    EV owners.
    """
    if not instances:
        raise GrowthError("need at least one instance")
    rows = []
    for k, inst in enumerate(instances):
        cov = coverages[k] if coverages is not None else build_coverage(inst)
        rows.append(np.cumsum(evaluate_per_period(inst, cov, candidate)))
    per_instance = np.vstack(rows)
    return per_instance.mean(axis=0), per_instance


def generate_growth_function(instances, candidate_solution: SolutionX,
                             coverages=None) -> GrowthFunction:
    """Fit the piecewise-linear growth map to averaged covering results.

    All instances must share the network (and hence the population). Delayed
    adoption (zero growth followed by positive growth) has no functional
    representation and raises.
    """
    populations = {round(inst.network.total_population, 6) for inst in instances}
    if len(populations) != 1:
        raise GrowthError("instances do not share a network population")
    population = instances[0].network.total_population
    cum, _ = mc_yearly_totals(instances, candidate_solution, coverages)
    if (np.diff(cum) < -1e-9).any():
        raise GrowthError("averaged yearly EV totals decrease; cannot fit a growth function")
    points = np.concatenate([[0.0], cum / population])
    return growth_from_points(points)


def growth_from_points(points) -> GrowthFunction:
    """Piecewise-linear fit through normalised cumulative points e_0..e_T,
    with g(e_{t-1}) = e_t, constant-slope extension and identity floor."""
    e = np.asarray(points, dtype=float)
    if (np.diff(e) < -1e-12).any():
        raise GrowthError("points must be nondecreasing")
    if e[-1] > 1.0 + 1e-9:
        raise GrowthError("normalised EV totals exceed the population")
    keep = np.concatenate([[True], np.diff(e) > 1e-12])
    dropped = e[~keep]
    e_red = e[keep]
    # a stalled year means g(e) = e at that point; resuming later has no
    # functional representation
    for z in dropped:
        later = e_red[e_red > z + 1e-12]
        idx = np.searchsorted(e_red, z)
        if idx < len(e_red) - 1 and later.size:
            raise GrowthError("zero-growth year followed by positive growth: "
                              "no single-valued growth function exists")
    e = e_red
    T = len(e) - 1
    if T < 1:
        return GrowthFunction.identity()

    q, m, o = [float(e[0])], [], []
    slopes_data = [(e[t + 1] - e[t]) / (e[t] - e[t - 1]) for t in range(1, T)]
    last_slope = slopes_data[-1] if slopes_data else 1.0
    for t in range(1, T + 1):
        slope = slopes_data[t - 1] if t - 1 < len(slopes_data) else last_slope
        q.append(float(e[t]))
        m.append(float(slope))
        o.append(float(e[t] - slope * e[t - 1]))
    data_hi = float(e[-1])

    # one extension segment from e_T to 1, continuing the last slope; the
    # identity floor and the cap at 1 live in value(), not in extra segments,
    # so T data years always yield T + 1 segments
    if q[-1] < 1.0 - 1e-12:
        q.append(1.0)
        m.append(last_slope)
        o.append(o[-1])
    return GrowthFunction(q, m, o, data_range=(float(e[0]), data_hi))


# -- growth-function file: ordered segment list ---------------------------------

_GF_HEADER = ["q_lo", "q_hi", "slope", "intercept"]


def growth_to_csv(gf: GrowthFunction) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_GF_HEADER)
    for s in range(len(gf.slopes)):
        w.writerow([repr(gf.breakpoints[s]), repr(gf.breakpoints[s + 1]),
                    repr(gf.slopes[s]), repr(gf.intercepts[s])])
    return buf.getvalue()


def growth_from_csv(text: str) -> GrowthFunction:
    rows = list(csv.reader(text.strip().splitlines()))
    if not rows or rows[0] != _GF_HEADER:
        raise GrowthError(f"bad growth-function header: {rows[:1]!r}")
    q = [float(rows[1][0])]
    m, o = [], []
    for row in rows[1:]:
        q.append(float(row[1]))
        m.append(float(row[2]))
        o.append(float(row[3]))
    return GrowthFunction(q, m, o)


def save_growth(gf: GrowthFunction, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(growth_to_csv(gf))


def load_growth(path) -> GrowthFunction:
    with open(path, "r", encoding="utf-8") as fh:
        return growth_from_csv(fh.read())


# -- GF instance and evaluation ---------------------------------------------------


@dataclass
class GfInstance:
    station_ids: tuple
    willing_nodes: tuple         # per station: node ids within the consideration radius
    max_outlets: np.ndarray
    initial_outlets: np.ndarray
    population: float            # whole-city population r
    node_population: dict        # r_i by node id
    outlet_cost: float
    opening_cost: np.ndarray
    budgets: np.ndarray
    growth: GrowthFunction
    horizon: int
    home_fraction: float = 0.566
    capacity_per_outlet: float | None = None  # None encodes infinite capacity


def build_gf_instance(instance: Instance, growth: GrowthFunction, radius_km=10.0,
                      outlet_cost=50.0, opening_cost=100.0,
                      home_fraction=0.566, capacity_per_outlet=None) -> GfInstance:
    """Assemble GF data from a covering instance: willing sets from the
    consideration radius, raw node populations, matching budgets."""
    net = instance.network
    station_nodes = [s.node_id for s in instance.stations]
    dist = net.distance_matrix(station_nodes)
    willing = tuple(
        tuple(net.node_ids[ni] for ni in np.flatnonzero(dist[si] <= radius_km))
        for si in range(len(station_nodes))
    )
    return GfInstance(
        station_ids=tuple(s.id for s in instance.stations),
        willing_nodes=willing,
        max_outlets=instance.max_outlets.copy(),
        initial_outlets=instance.initial_levels.copy(),
        population=net.total_population,
        node_population={n.id: n.population for n in net.nodes},
        outlet_cost=float(outlet_cost),
        opening_cost=np.full(len(station_nodes), float(opening_cost)),
        budgets=np.asarray(instance.cost_budget.budgets, dtype=float),
        growth=growth,
        horizon=instance.horizon,
        home_fraction=home_fraction,
        capacity_per_outlet=capacity_per_outlet,
    )


@dataclass
class GfSolution:
    open: np.ndarray     # (J, T) bool
    outlets: np.ndarray  # (J, T) cumulative outlet counts, as in the model


def extract_gf_solution(gf: GfInstance, values: dict) -> GfSolution:
    J, T = len(gf.station_ids), gf.horizon
    open_ = np.zeros((J, T), dtype=bool)
    outlets = np.zeros((J, T), dtype=int)
    for j, sid in enumerate(gf.station_ids):
        for t in range(1, T + 1):
            open_[j, t - 1] = values.get(f"gy_{sid}_t{t}", 0.0) > 0.5
            outlets[j, t - 1] = int(round(values.get(f"gx_{sid}_t{t}", 0.0)))
    return GfSolution(open_, outlets)


@dataclass
class GfOutcome:
    yearly_totals: np.ndarray   # EVs at the end of each year
    station_stocks: np.ndarray  # (J, T)
    node_ev: dict               # final-year EVs per node id


def gf_forward_recursion(gf: GfInstance, solution: GfSolution) -> GfOutcome:
    """Resolve the EV loads for a fixed station schedule by the year-by-year
    recursion: every open station takes its full growth-capped increment
    (the per-station constraints are separable, so this is the maximum)."""
    J, T = len(gf.station_ids), gf.horizon
    growth = gf.growth
    r = gf.population
    shares = np.array([
        sum(gf.node_population[i] for i in gf.willing_nodes[j]) / r for j in range(J)
    ])
    stocks = np.zeros(J)
    stock_hist = np.zeros((J, T))
    totals = np.zeros(T)
    for t in range(T):
        z = stocks.sum()
        s = growth.segment_of(z / r)
        inc_city = growth.intercepts[s] * r + (growth.slopes[s] - 1.0) * z
        inc_city = max(inc_city, 0.0)
        for j in range(J):
            if not solution.open[j, t]:
                continue
            inc = shares[j] * inc_city
            if gf.capacity_per_outlet is not None and gf.home_fraction > 0:
                cap = gf.capacity_per_outlet * solution.outlets[j, t]
                inc = min(inc, max(cap / gf.home_fraction - stocks[j], 0.0))
            stocks[j] += inc
        stock_hist[:, t] = stocks
        totals[t] = stocks.sum()
    node_ev = {}
    for j in range(J):
        pop_j = sum(gf.node_population[i] for i in gf.willing_nodes[j])
        if pop_j <= 0:
            continue
        for i in gf.willing_nodes[j]:
            node_ev[i] = node_ev.get(i, 0.0) + stocks[j] * gf.node_population[i] / pop_j
    return GfOutcome(totals, stock_hist, node_ev)


def adjust_solution_max_outlets(gf: GfInstance, solution: GfSolution) -> SolutionX:
    """Raise every opened station to its maximum outlet count from its opening
    period onward. Deliberately budget-infeasible; for comparison only."""
    J, T = len(gf.station_ids), gf.horizon
    levels = np.zeros((J, T), dtype=int)
    for j in range(J):
        opened = np.flatnonzero(solution.open[j])
        if opened.size:
            levels[j, opened[0]:] = int(gf.max_outlets[j])
    return SolutionX.from_levels(levels, int(gf.max_outlets.max()))


def gf_solution_as_x(gf: GfInstance, solution: GfSolution) -> SolutionX:
    """The GF outlet schedule in ladder form, for evaluation under f."""
    return SolutionX.from_levels(solution.outlets.astype(int), int(gf.max_outlets.max()))


def evaluate_under_mc(instance: Instance, coverage: CoverageTensor, x: SolutionX) -> float:
    """Covering objective of an arbitrary solution (GF or otherwise)."""
    return evaluate(instance, coverage, x)


def per_node_ev(instance: Instance, coverage: CoverageTensor, x: SolutionX) -> dict:
    """Covered EV mass per network node (summed over the horizon)."""
    levels = x.levels
    words = coverage.cover_words(levels)
    counts = np.bitwise_count(words).astype(np.float64)
    trip = coverage.trip
    out = {nid: 0.0 for nid in instance.network.node_ids}
    for ci, uc in enumerate(instance.user_classes):
        node = uc.home_node
        for t in range(trip.horizon):
            b = trip.block(ci, t)
            covered = counts[trip.word_start[b]: trip.word_start[b + 1]].sum()
            out[node] += trip.block_weight[b] * covered
    return out


def write_node_ev_csv(instance: Instance, node_ev: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "x_km", "y_km", "population", "ev", "ev_pct"])
        for node in instance.network.nodes:
            ev = node_ev.get(node.id, 0.0)
            pct = 100.0 * ev / node.population if node.population > 0 else 0.0
            w.writerow([node.id, repr(node.x), repr(node.y), repr(node.population),
                        repr(float(ev)), repr(pct)])
