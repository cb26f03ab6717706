"""Solver-agnostic linear models: the single-level (SL) formulation with its
Big-M linearised lower level, the maximum-covering (MC) reformulation, and
the piecewise-linear growth-function (GF) baseline model.

Variable name scheme (documented, relied on by the solution extractors):
  x_{station}_{k}_{t}          binary outlet-ladder variables
  w_c{ci}_r{r}_t{t}            MC covering variables (continuous in [0, 1])
  w_c{ci}_r{r}_t{t}_a{alt}     SL selection variables (binary; a-1 denotes home)
  u_c{ci}_r{r}_t{t}_a{alt}     SL utilities (free)
  alpha_c{ci}_r{r}_t{t}        SL max-utility variables (free)
  gx_{station}_t{t}, gy_{station}_t{t}, gw_s{s}_t{t}, gz_s{s}_t{t},
  gh_{node}_{station}_t{t}     GF outlet counts, openings, segment picks,
                               segment loads and per-node EV loads
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .covering import CoverageTensor, compute_abar, preprocess_home_charging
from .instance import HOME, OPT_OUT, Instance, SolutionX

BINARY = "binary"
CONTINUOUS = "continuous"
INTEGER = "integer"

_SENSES = ("<=", ">=", "=")


class ModelError(ValueError):
    pass


@dataclass
class LinVar:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    kind: str = CONTINUOUS


@dataclass
class LinRow:
    name: str
    coeffs: dict
    sense: str
    rhs: float


class MilpModel:
    """Plain container: variables, linear rows, one linear objective."""

    def __init__(self, name, sense):
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be min or max, got {sense!r}")
        self.name = name
        self.sense = sense
        self.variables: list[LinVar] = []
        self.rows: list[LinRow] = []
        self.objective: dict[str, float] = {}
        self.objective_constant = 0.0
        self._var_index: dict[str, int] = {}

    def add_var(self, name, lb=0.0, ub=math.inf, kind=CONTINUOUS):
        if name in self._var_index:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self._var_index[name] = len(self.variables)
        self.variables.append(LinVar(name, float(lb), float(ub), kind))
        return name

    def add_row(self, name, coeffs, sense, rhs):
        if sense not in _SENSES:
            raise ModelError(f"bad row sense {sense!r}")
        self.rows.append(LinRow(name, dict(coeffs), sense, float(rhs)))

    def set_objective(self, coeffs, constant=0.0):
        self.objective = dict(coeffs)
        self.objective_constant = float(constant)

    @property
    def n_variables(self):
        return len(self.variables)

    @property
    def n_rows(self):
        return len(self.rows)

    def validate(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ModelError("duplicate variable names")
        row_names = [r.name for r in self.rows]
        if len(set(row_names)) != len(row_names):
            raise ModelError("duplicate row names")
        declared = set(names)
        for r in self.rows:
            missing = set(r.coeffs) - declared
            if missing:
                raise ModelError(f"row {r.name!r} references undeclared variables {missing}")
        missing = set(self.objective) - declared
        if missing:
            raise ModelError(f"objective references undeclared variables {missing}")
        for v in self.variables:
            if v.kind in (BINARY, INTEGER) and not (math.isfinite(v.lb) and math.isfinite(v.ub)):
                raise ModelError(f"discrete variable {v.name} needs finite bounds")


# -- x block shared by SL and MC ---------------------------------------------


def x_name(station_id, k, t):
    return f"x_{station_id}_{k}_{t}"


def _add_x_block(model: MilpModel, instance: Instance):
    """Ladder variables with budget, ladder and persistence rows.

    Period-1 persistence is imposed through lower bounds from the initial
    state; the k=1 ladder row is vacuous (x_j0 == 1) and omitted.
    """
    T = instance.horizon
    for j, st in enumerate(instance.stations):
        for k in range(1, st.max_outlets + 1):
            for t in range(1, T + 1):
                lb = 1.0 if st.initial_outlets >= k else 0.0
                model.add_var(x_name(st.id, k, t), lb=lb, ub=1.0, kind=BINARY)
    for t in range(1, T + 1):
        coeffs = {}
        for j, st in enumerate(instance.stations):
            for k in range(1, st.max_outlets + 1):
                c = instance.cost_budget.outlet_cost[j, k - 1, t - 1]
                coeffs[x_name(st.id, k, t)] = c
                if t > 1:
                    coeffs[x_name(st.id, k, t - 1)] = coeffs.get(x_name(st.id, k, t - 1), 0.0) - c
        rhs = instance.cost_budget.budgets[t - 1]
        if t == 1:
            rhs += sum(
                instance.cost_budget.outlet_cost[j, k - 1, 0]
                for j, st in enumerate(instance.stations)
                for k in range(1, st.initial_outlets + 1)
            )
        model.add_row(f"budget_t{t}", coeffs, "<=", rhs)
    for j, st in enumerate(instance.stations):
        for t in range(1, T + 1):
            for k in range(2, st.max_outlets + 1):
                model.add_row(f"ladder_{st.id}_{k}_t{t}",
                              {x_name(st.id, k, t): 1.0, x_name(st.id, k - 1, t): -1.0},
                              "<=", 0.0)
            if t > 1:
                for k in range(1, st.max_outlets + 1):
                    model.add_row(f"persist_{st.id}_{k}_t{t}",
                                  {x_name(st.id, k, t): 1.0, x_name(st.id, k, t - 1): -1.0},
                                  ">=", 0.0)


def extract_solution_x(instance: Instance, values: dict) -> SolutionX:
    """Read the x block back from a solver's variable values."""
    max_k = int(instance.max_outlets.max()) if instance.n_stations else 0
    binary = np.zeros((instance.n_stations, max_k, instance.horizon), dtype=np.int8)
    for j, st in enumerate(instance.stations):
        for k in range(1, st.max_outlets + 1):
            for t in range(1, instance.horizon + 1):
                binary[j, k - 1, t - 1] = 1 if values.get(x_name(st.id, k, t), 0.0) > 0.5 else 0
    return SolutionX(binary)


# -- Big-M bounds -------------------------------------------------------------


@dataclass
class BigMBounds:
    """Utility bounds of the linearised lower level.

    abar[i, t]: closed-station discount level (min over considered stations
    and scenarios of kappa + eps), possibly lowered to stay strictly under
    every opt-out utility. b, nu, mu are per class with shapes
    (n_alts, R, T): b is the all-outlets utility upper bound, nu = b - abar
    for station alternatives, mu the per-alternative linearisation constant.
    """

    abar: np.ndarray
    b: tuple
    nu: tuple
    mu: tuple
    abar_adjusted: list = field(default_factory=list)  # (class_index, t) pairs

    def verify(self):
        for ci, (nu_c, mu_c) in enumerate(zip(self.nu, self.mu)):
            if np.nanmin(nu_c) < -1e-9 or np.nanmin(mu_c) < -1e-9:
                raise ModelError(f"class index {ci}: negative Big-M constant")


def compute_bounds(instance: Instance, strengthen_abar=False) -> BigMBounds:
    """Exact bound formulas; checks abar < u0 for every scenario and lowers
    abar with a warning where the check fails (small R can break it)."""
    T = instance.horizon
    abar = compute_abar(instance)
    adjusted = []
    b_all, nu_all, mu_all = [], [], []

    if strengthen_abar:
        for ci in range(instance.n_classes):
            alt_index = instance.choice_sets.alt_index[ci]
            kap = instance.utility_params.kappa[ci]
            bet = instance.utility_params.beta[ci]
            eps = instance.error_tensor[ci]
            for t in range(T):
                vals = [
                    (kap[pos, t] + bet[pos, 0, t] + eps[pos, :, t]).min()
                    for alt, pos in alt_index.items()
                    if alt not in (OPT_OUT, HOME) and alt in instance.choice_sets.c1[ci][t]
                ]
                if vals:
                    abar[ci, t] = min(vals)

    for ci in range(instance.n_classes):
        alt_index = instance.choice_sets.alt_index[ci]
        kap = instance.utility_params.kappa[ci]
        bet = instance.utility_params.beta[ci]
        eps = instance.error_tensor[ci]
        base = kap[:, None, :] + eps  # (n_alts, R, T)
        o = alt_index[OPT_OUT]
        u0_min = base[o].min(axis=0)  # (T,)
        for t in range(T):
            if not np.isnan(abar[ci, t]) and abar[ci, t] >= u0_min[t]:
                abar[ci, t] = u0_min[t] - 1e-6
                adjusted.append((ci, t))

        n_alts = kap.shape[0]
        is_station = np.array([alt not in (OPT_OUT, HOME) for alt in alt_index], dtype=bool)
        beta_total = bet.sum(axis=1)  # (n_alts, T)
        b = base + np.where(is_station[:, None], beta_total, 0.0)[:, None, :]
        cap = np.where(is_station[:, None, None], b, base).max(axis=0)  # (R, T)
        mu = np.where(is_station[:, None, None],
                      cap[None, :, :] - abar[ci][None, None, :],
                      cap[None, :, :] - base)
        nu = np.where(is_station[:, None, None], b - abar[ci][None, None, :], 0.0)
        b_all.append(b)
        nu_all.append(nu)
        mu_all.append(mu)

    if adjusted:
        warnings.warn(
            f"abar >= opt-out utility for {len(adjusted)} (class, period) pairs; "
            "lowered to min_r u0 - 1e-6 to keep the Big-M sound", stacklevel=2)
    bounds = BigMBounds(abar, tuple(b_all), tuple(nu_all), tuple(mu_all), adjusted)
    bounds.verify()
    return bounds


# -- single-level model --------------------------------------------------------


def build_sl(instance: Instance, bounds: BigMBounds, relax_w=False) -> MilpModel:
    """Single-level model: minimise the opt-out mass subject to the ladder
    block, Big-M utility discounting, and the KKT-linearised choice step.
    Home-forced triplets are dropped (their choice can never be opt-out)."""
    bounds.verify()
    model = MilpModel("sl", "min")
    _add_x_block(model, instance)
    pre = preprocess_home_charging(instance)
    T = instance.horizon
    obj = {}

    for ci, uc in enumerate(instance.user_classes):
        alt_index = instance.choice_sets.alt_index[ci]
        kap = instance.utility_params.kappa[ci]
        bet = instance.utility_params.beta[ci]
        eps = instance.error_tensor[ci]
        weight = [uc.populations[t] / uc.scenario_count for t in range(T)]
        forced = pre.forced[ci]
        for t in range(1, T + 1):
            stations_t = [a for a in instance.choice_sets.c1[ci][t - 1]]
            for r in range(uc.scenario_count):
                if forced is not None and forced[r, t - 1]:
                    continue
                tag = f"c{ci}_r{r}_t{t}"
                alts_block = [OPT_OUT] + stations_t
                names_w, names_u = {}, {}
                for alt in alts_block:
                    a_tag = f"{tag}_a{alt if alt != HOME else -1}"
                    names_w[alt] = model.add_var(
                        f"w_{a_tag}", lb=0.0, ub=1.0,
                        kind=CONTINUOUS if relax_w else BINARY)
                    names_u[alt] = model.add_var(f"u_{a_tag}", lb=-math.inf, ub=math.inf)
                alpha = model.add_var(f"alpha_{tag}", lb=-math.inf, ub=math.inf)
                obj[names_w[OPT_OUT]] = weight[t - 1]

                o = alt_index[OPT_OUT]
                model.add_row(f"uexo_{tag}", {names_u[OPT_OUT]: 1.0}, "=",
                              kap[o, t - 1] + eps[o, r, t - 1])
                for alt in stations_t:
                    pos = alt_index[alt]
                    m_j = instance.stations[instance.station_index[alt]].max_outlets
                    nu = bounds.nu[ci][pos, r, t - 1]
                    ab = bounds.abar[ci, t - 1]
                    ke = kap[pos, t - 1] + eps[pos, r, t - 1]
                    beta_x = {x_name(alt, k, t): bet[pos, k - 1, t - 1]
                              for k in range(1, m_j + 1)}
                    model.add_row(f"uclosedlo_{tag}_a{alt}", {names_u[alt]: 1.0}, ">=", ab)
                    model.add_row(f"uclosedhi_{tag}_a{alt}",
                                  {names_u[alt]: 1.0, x_name(alt, 1, t): -nu}, "<=", ab)
                    row = {names_u[alt]: 1.0, **{n: -c for n, c in beta_x.items()}}
                    row[x_name(alt, 1, t)] = row.get(x_name(alt, 1, t), 0.0) - nu
                    model.add_row(f"uopenlo_{tag}_a{alt}", row, ">=", ke - nu)
                    # a strengthened discount level can sit above kappa+eps;
                    # the upper row then needs slack while the station is closed
                    slack = max(0.0, ab - ke)
                    row = {names_u[alt]: 1.0, **{n: -c for n, c in beta_x.items()}}
                    if slack > 0:
                        row[x_name(alt, 1, t)] = row.get(x_name(alt, 1, t), 0.0) + slack
                    model.add_row(f"uopenhi_{tag}_a{alt}", row, "<=", ke + slack)
                for alt in alts_block:
                    pos = alt_index[alt]
                    mu = bounds.mu[ci][pos, r, t - 1]
                    model.add_row(f"pick_{tag}_a{alt}",
                                  {names_u[alt]: 1.0, alpha: -1.0, names_w[alt]: -mu},
                                  ">=", -mu)
                model.add_row(f"one_{tag}", {n: 1.0 for n in names_w.values()}, "=", 1.0)
                for alt in alts_block:
                    model.add_row(f"amax_{tag}_a{alt}",
                                  {alpha: 1.0, names_u[alt]: -1.0}, ">=", 0.0)
    model.set_objective(obj)
    model.validate()
    return model


def sl_objective_complement(instance: Instance) -> float:
    """Constant linking SL and MC objectives: MC_max + SL_min equals this."""
    return instance.demand_mass()


# -- maximum covering model ----------------------------------------------------


def build_mc(instance: Instance, coverage: CoverageTensor) -> MilpModel:
    """Maximum covering model: one covering row per non-forced triplet;
    home-forced triplets enter the objective as a constant."""
    model = MilpModel("mc", "max")
    _add_x_block(model, instance)
    trip = coverage.trip
    obj = {}
    forced_words = coverage.forced_bits
    for ci, uc in enumerate(instance.user_classes):
        for t in range(1, instance.horizon + 1):
            b = trip.block(ci, t - 1)
            p0 = trip.bit_start[b]
            w0 = trip.word_start[b]
            weight = uc.populations[t - 1] / uc.scenario_count
            for r in range(uc.scenario_count):
                if forced_words[w0 + r // 64] >> np.uint64(r % 64) & np.uint64(1):
                    continue
                coeffs = {}
                p = p0 + r
                for alt in instance.choice_sets.c1[ci][t - 1]:
                    j = instance.station_index[alt]
                    mk = int(coverage.min_k[j, p])
                    if mk:
                        for k in range(mk, instance.stations[j].max_outlets + 1):
                            coeffs[x_name(alt, k, t)] = 1.0
                w = model.add_var(f"w_c{ci}_r{r}_t{t}", lb=0.0, ub=1.0)
                obj[w] = weight
                coeffs[w] = -1.0
                model.add_row(f"cover_c{ci}_r{r}_t{t}", coeffs, ">=", 0.0)
    model.set_objective(obj, constant=coverage.forced_mass)
    model.validate()
    return model


def build_mc_period(instance: Instance, coverage: CoverageTensor, t: int,
                    base_levels) -> MilpModel:
    """Single-period MC restriction used by the rolling horizon: only the
    period-t ladder variables, persistence encoded as lower bounds from the
    already-fixed previous period."""
    if not 1 <= t <= instance.horizon:
        raise ModelError(f"period {t} outside horizon")
    model = MilpModel(f"mc_t{t}", "max")
    base_levels = np.asarray(base_levels, dtype=int)
    for j, st in enumerate(instance.stations):
        for k in range(1, st.max_outlets + 1):
            lb = 1.0 if base_levels[j] >= k else 0.0
            model.add_var(x_name(st.id, k, t), lb=lb, ub=1.0, kind=BINARY)
    coeffs = {}
    for j, st in enumerate(instance.stations):
        for k in range(base_levels[j] + 1, st.max_outlets + 1):
            coeffs[x_name(st.id, k, t)] = instance.cost_budget.outlet_cost[j, k - 1, t - 1]
    model.add_row(f"budget_t{t}", coeffs, "<=", instance.cost_budget.budgets[t - 1])
    for j, st in enumerate(instance.stations):
        for k in range(2, st.max_outlets + 1):
            model.add_row(f"ladder_{st.id}_{k}_t{t}",
                          {x_name(st.id, k, t): 1.0, x_name(st.id, k - 1, t): -1.0},
                          "<=", 0.0)
    trip = coverage.trip
    obj = {}
    constant = 0.0
    forced_words = coverage.forced_bits
    for ci, uc in enumerate(instance.user_classes):
        b = trip.block(ci, t - 1)
        p0, w0 = trip.bit_start[b], trip.word_start[b]
        weight = uc.populations[t - 1] / uc.scenario_count
        for r in range(uc.scenario_count):
            if forced_words[w0 + r // 64] >> np.uint64(r % 64) & np.uint64(1):
                constant += weight
                continue
            coeffs = {}
            p = p0 + r
            for alt in instance.choice_sets.c1[ci][t - 1]:
                j = instance.station_index[alt]
                mk = int(coverage.min_k[j, p])
                if mk:
                    for k in range(mk, instance.stations[j].max_outlets + 1):
                        coeffs[x_name(alt, k, t)] = 1.0
            w = model.add_var(f"w_c{ci}_r{r}_t{t}", lb=0.0, ub=1.0)
            obj[w] = weight
            coeffs[w] = -1.0
            model.add_row(f"cover_c{ci}_r{r}_t{t}", coeffs, ">=", 0.0)
    model.set_objective(obj, constant=constant)
    model.validate()
    return model


# -- growth-function model -----------------------------------------------------


def build_gf(gf_instance) -> MilpModel:
    """Intracity growth-function MILP. With infinite per-outlet capacity the
    capacity rows are omitted and EV loads are gated by station openness
    instead, which keeps the model bounded."""
    gf = gf_instance
    growth = gf.growth
    if not growth.covers_unit_interval():
        raise ModelError("growth function does not cover [0, 1]")
    model = MilpModel("gf", "max")
    T = gf.horizon
    S = len(growth.slopes)
    r_total = gf.population

    for j, sid in enumerate(gf.station_ids):
        for t in range(1, T + 1):
            model.add_var(f"gx_{sid}_t{t}", lb=0.0, ub=float(gf.max_outlets[j]), kind=INTEGER)
            model.add_var(f"gy_{sid}_t{t}", lb=0.0, ub=1.0, kind=BINARY)
    for s in range(1, S + 1):
        for t in range(1, T + 1):
            model.add_var(f"gw_s{s}_t{t}", lb=0.0, ub=1.0, kind=BINARY)
            model.add_var(f"gz_s{s}_t{t}", lb=0.0, ub=float(r_total))
    for j, sid in enumerate(gf.station_ids):
        for i in gf.willing_nodes[j]:
            for t in range(1, T + 1):
                model.add_var(f"gh_{i}_{sid}_t{t}", lb=0.0, ub=float(r_total))

    def h_sum(j, t):
        sid = gf.station_ids[j]
        return {f"gh_{i}_{sid}_t{t}": 1.0 for i in gf.willing_nodes[j]}

    for t in range(1, T + 1):
        coeffs = {}
        for j, sid in enumerate(gf.station_ids):
            coeffs[f"gx_{sid}_t{t}"] = gf.outlet_cost
            coeffs[f"gy_{sid}_t{t}"] = gf.opening_cost[j]
            if t > 1:
                coeffs[f"gx_{sid}_t{t-1}"] = -gf.outlet_cost
                coeffs[f"gy_{sid}_t{t-1}"] = -gf.opening_cost[j]
        rhs = gf.budgets[t - 1]
        if t == 1:
            rhs += sum(gf.outlet_cost * gf.initial_outlets[j]
                       + (gf.opening_cost[j] if gf.initial_outlets[j] > 0 else 0.0)
                       for j in range(len(gf.station_ids)))
        model.add_row(f"gbudget_t{t}", coeffs, "<=", rhs)

    for j, sid in enumerate(gf.station_ids):
        for t in range(1, T + 1):
            model.add_row(f"gcap_{sid}_t{t}",
                          {f"gx_{sid}_t{t}": 1.0, f"gy_{sid}_t{t}": -float(gf.max_outlets[j])},
                          "<=", 0.0)
            # an open station holds at least one outlet; without this, the
            # uncapacitated gating would let outlet-less "open" stations serve
            model.add_row(f"gopen_{sid}_t{t}",
                          {f"gx_{sid}_t{t}": 1.0, f"gy_{sid}_t{t}": -1.0}, ">=", 0.0)
            prev_x = {f"gx_{sid}_t{t-1}": -1.0} if t > 1 else {}
            model.add_row(f"gkeepx_{sid}_t{t}", {f"gx_{sid}_t{t}": 1.0, **prev_x}, ">=",
                          0.0 if t > 1 else float(gf.initial_outlets[j]))
            prev_y = {f"gy_{sid}_t{t-1}": -1.0} if t > 1 else {}
            model.add_row(f"gkeepy_{sid}_t{t}", {f"gy_{sid}_t{t}": 1.0, **prev_y}, ">=",
                          0.0 if t > 1 else (1.0 if gf.initial_outlets[j] > 0 else 0.0))

    q_abs = [qv * r_total for qv in growth.breakpoints]
    o_abs = [ov * r_total for ov in growth.intercepts]
    for t in range(1, T + 1):
        coeffs = {f"gz_s{s}_t{t}": 1.0 for s in range(1, S + 1)}
        if t > 1:
            for j in range(len(gf.station_ids)):
                for n, c in h_sum(j, t - 1).items():
                    coeffs[n] = -c
        model.add_row(f"gstock_t{t}", coeffs, "=", 0.0)
        for s in range(1, S + 1):
            model.add_row(f"gseglo_s{s}_t{t}",
                          {f"gz_s{s}_t{t}": 1.0, f"gw_s{s}_t{t}": -q_abs[s - 1]}, ">=", 0.0)
            model.add_row(f"gseghi_s{s}_t{t}",
                          {f"gz_s{s}_t{t}": 1.0, f"gw_s{s}_t{t}": -q_abs[s]}, "<=", 0.0)
        model.add_row(f"goneseg_t{t}", {f"gw_s{s}_t{t}": 1.0 for s in range(1, S + 1)},
                      "<=", 1.0)

    for j, sid in enumerate(gf.station_ids):
        share = sum(gf.node_population[i] for i in gf.willing_nodes[j]) / r_total
        for t in range(1, T + 1):
            coeffs = dict(h_sum(j, t))
            if t > 1:
                for n, c in h_sum(j, t - 1).items():
                    coeffs[n] = coeffs.get(n, 0.0) - c
            for s in range(1, S + 1):
                coeffs[f"gw_s{s}_t{t}"] = -share * o_abs[s - 1]
                coeffs[f"gz_s{s}_t{t}"] = -share * (growth.slopes[s - 1] - 1.0)
            model.add_row(f"ggrow_{sid}_t{t}", coeffs, "<=", 0.0)
            if t > 1:
                coeffs = dict(h_sum(j, t))
                for n, c in h_sum(j, t - 1).items():
                    coeffs[n] = coeffs.get(n, 0.0) - c
                model.add_row(f"gmono_{sid}_t{t}", coeffs, ">=", 0.0)

    for j, sid in enumerate(gf.station_ids):
        for t in range(1, T + 1):
            if gf.capacity_per_outlet is None:
                for i in gf.willing_nodes[j]:
                    model.add_row(f"ggate_{i}_{sid}_t{t}",
                                  {f"gh_{i}_{sid}_t{t}": 1.0,
                                   f"gy_{sid}_t{t}": -float(gf.node_population[i])},
                                  "<=", 0.0)
            else:
                coeffs = {n: gf.home_fraction for n in h_sum(j, t)}
                cap = gf.capacity_per_outlet
                for tp in range(1, t + 1):
                    coeffs[f"gx_{sid}_t{tp}"] = -cap
                model.add_row(f"gcapout_{sid}_t{t}", coeffs, "<=",
                              cap * gf.initial_outlets[j])

    obj = {}
    for j in range(len(gf.station_ids)):
        for n, c in h_sum(j, T).items():
            obj[n] = c
    model.set_objective(obj)
    model.validate()
    return model
