"""Greedy, GRASP and rolling-horizon heuristics over the coverage tensor.

All heuristics work on outlet-count schedules (levels[j, t]) and only ever
emit feasible solutions. Greedy is deterministic; GRASP is reproducible from
its seed; rolling horizon delegates each period to the external solver (or
to per-period enumeration when no solver is configured).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .covering import CoverageTensor, evaluate
from .exact import EnumerationBudget, period_extensions
from .instance import Instance, SolutionX, period_costs
from .milp import build_mc_period, extract_solution_x
from .solver import STATUS_NOT_CONFIGURED, resolve_solver_command, solve_external

MYOPIC = "myopic"
HYPEROPTIC = "hyperoptic"


class HeuristicError(RuntimeError):
    pass


@dataclass
class GreedyConfig:
    mode: str = MYOPIC  # ties break to the lowest station index, then lowest k

    def __post_init__(self):
        if self.mode not in (MYOPIC, HYPEROPTIC):
            raise ValueError(f"unknown search mode {self.mode!r}")


@dataclass
class GraspConfig:
    alpha: float = 0.85
    mode: str = MYOPIC
    max_solutions: int = 300
    max_filtered: int = 500
    time_limit_s: float = 7200.0
    improvement_mode: str = "first"   # or "best"
    filter_warmup: int = 10
    local_search_min_rel_gain: float = 1e-4
    seed: int = 0
    rcl_rule: str = "value"           # or "subtractive"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.mode not in (MYOPIC, HYPEROPTIC):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if self.improvement_mode not in ("first", "best"):
            raise ValueError("improvement_mode must be 'first' or 'best'")
        if self.rcl_rule not in ("value", "subtractive"):
            raise ValueError("rcl_rule must be 'value' or 'subtractive'")


@dataclass
class RollingHorizonConfig:
    allocation: str = "even"          # or "geometric"
    total_time_limit_s: float = 7200.0
    first_period_share_s: float = 3600.0  # geometric: halved every period

    def __post_init__(self):
        if self.allocation not in ("even", "geometric"):
            raise ValueError("allocation must be 'even' or 'geometric'")


@dataclass
class HeuristicResult:
    x: SolutionX
    f: float
    wall_time: float
    trace: list = field(default_factory=list)
    seed: int | None = None
    termination: str = "completed"


# -- shared internals -----------------------------------------------------------


def _initial_levels(instance):
    return np.repeat(instance.initial_levels[:, None], instance.horizon, axis=1)


def _period_value(coverage, levels_t, t):
    sl = coverage.trip.word_slice(t)
    rows = coverage.active_slots(levels_t)
    words = coverage.forced_bits[sl].copy()
    if rows:
        words |= np.bitwise_or.reduce(coverage.a_bits[rows, sl], axis=0)
    return float(np.bitwise_count(words).astype(np.float64)
                 @ coverage.trip.word_weights[sl])


def _period_values_from(coverage, levels, t_from):
    return np.array([_period_value(coverage, levels[:, t - 1], t)
                     for t in range(t_from, coverage.horizon + 1)])


def _construct(instance, coverage, mode, select, trace=None, clock=None):
    """Common greedy skeleton: per period, repeatedly add one affordable outlet
    chosen by `select` from the positive-score candidates, until no candidate
    remains or no candidate gains anything."""
    J, T = instance.n_stations, instance.horizon
    levels = _initial_levels(instance)
    cost = instance.cost_budget.outlet_cost
    budgets = instance.cost_budget.budgets
    pw_cache = {}
    for t in range(1, T + 1):
        if t > 1:
            levels[:, t - 1] = levels[:, t - 2]
        spent = 0.0
        held = coverage.held_cover_words(levels[:, t - 1], t)
        pw = pw_cache.setdefault(t, coverage.trip.word_slice(t).stop
                                 - coverage.trip.word_slice(t).start)
        while True:
            cand_j, cand_rows = [], []
            for j in range(J):
                lv = int(levels[j, t - 1])
                if lv < instance.stations[j].max_outlets \
                        and spent + cost[j, lv, t - 1] <= budgets[t - 1] + 1e-9:
                    cand_j.append(j)
                    cand_rows.append(coverage.slot(j, lv + 1))
            if not cand_j:
                break
            if mode == MYOPIC:
                gains = coverage.slot_gains(cand_rows, held[:pw], t, t)
            else:
                gains = coverage.slot_gains(cand_rows, held, t)
            pick = select(np.asarray(gains))
            if pick is None:
                break
            j = cand_j[pick]
            lv = int(levels[j, t - 1])
            spent += cost[j, lv, t - 1]
            levels[j, t - 1] = lv + 1
            sl = coverage.trip.word_slice(t, coverage.horizon)
            held |= coverage.a_bits[cand_rows[pick], sl]
            if trace is not None:
                trace.append({"period": t, "station": instance.stations[j].id,
                              "k": lv + 1, "score": float(gains[pick]),
                              "elapsed": 0.0 if clock is None else time.perf_counter() - clock})
    max_k = int(instance.max_outlets.max()) if J else 0
    return levels, SolutionX.from_levels(levels, max_k)


def _greedy_pick(gains):
    if gains.size == 0 or gains.max() <= 0.0:
        return None
    return int(np.argmax(gains))  # first max = lowest station index


def greedy(instance: Instance, coverage: CoverageTensor, config: GreedyConfig | None = None
           ) -> HeuristicResult:
    """Deterministic outlet-at-a-time construction from the zero solution."""
    config = config or GreedyConfig()
    start = time.perf_counter()
    trace = []
    _, x = _construct(instance, coverage, config.mode, _greedy_pick, trace, start)
    f = evaluate(instance, coverage, x)
    for row in trace:
        row["f"] = None
    if trace:
        trace[-1]["f"] = f
    return HeuristicResult(x, f, time.perf_counter() - start, trace,
                           termination="completed")


def grasp_construct(instance, coverage, alpha, mode, rng) -> SolutionX:
    """Randomised construction: pick uniformly from the restricted candidate
    list of positive-gain additions within alpha of the best. With alpha = 1
    the greedy tie-break applies, so the output is exactly the greedy
    solution."""
    return _grasp_construct_rule(instance, coverage, alpha, mode, rng, "value")


def _grasp_construct_rule(instance, coverage, alpha, mode, rng, rcl_rule) -> SolutionX:
    def pick(gains):
        if gains.size == 0:
            return None
        best = gains.max()
        if best <= 0.0:
            return None
        if alpha >= 1.0 and rcl_rule == "value":
            return int(np.argmax(gains))
        if rcl_rule == "value":
            threshold = alpha * best
        else:
            positive = gains[gains > 0.0]
            worst = positive.min()
            threshold = best - alpha * (best - worst)
        rcl = np.flatnonzero((gains > 0.0) & (gains >= threshold - 1e-12))
        return int(rng.choice(rcl))

    _, x = _construct(instance, coverage, mode, pick)
    return x


def grasp_filter(candidate_f, incumbent_f, max_observed_rel_increase) -> bool:
    """True when the candidate should be filtered out (no local search): its
    projected post-search value cannot beat the incumbent. During warmup
    (max rel increase still undefined) everything is kept."""
    if max_observed_rel_increase is None:
        return False
    return candidate_f * max_observed_rel_increase <= incumbent_f


# -- local search ----------------------------------------------------------------


def _schedule_feasible(instance, levels):
    return bool((period_costs(instance, levels) <= instance.cost_budget.budgets + 1e-9).all())


def _freed_per_period(instance, levels, j, t_idx, base):
    """Cost of station j's increments in periods t_idx.. under `levels`, with
    everything above `base` counted in the period it was bought."""
    cost = instance.cost_budget.outlet_cost
    T = levels.shape[1]
    freed = np.zeros(T - t_idx)
    prev = base
    for tau in range(t_idx, T):
        cur = int(levels[j, tau])
        for k in range(prev + 1, cur + 1):
            freed[tau - t_idx] += cost[j, k - 1, tau]
        prev = max(prev, cur)
    return freed


def _buy_up(instance, j, start_level, pool, tau):
    cost = instance.cost_budget.outlet_cost
    m_j = instance.stations[j].max_outlets
    lv = start_level
    while lv < m_j and pool >= cost[j, lv, tau] - 1e-9:
        pool -= cost[j, lv, tau]
        lv += 1
    return lv, pool


def _move_add(instance, levels, j, t_idx):
    m_j = instance.stations[j].max_outlets
    lv = int(levels[j, t_idx])
    if lv >= m_j:
        return None
    new = levels.copy()
    new[j, t_idx:] = np.maximum(new[j, t_idx:], lv + 1)
    return new if _schedule_feasible(instance, new) else None


def _move_transfer(instance, levels, j, jp, t_idx):
    """Revert j to its period-(t-1) level from t on and spend the freed
    resources on jp, overflowing back to j when jp is full."""
    base_j = int(levels[j, t_idx - 1]) if t_idx > 0 else int(instance.initial_levels[j])
    if int(levels[j, t_idx]) < 1:
        return None
    freed = _freed_per_period(instance, levels, j, t_idx, base_j)
    if freed.sum() <= 0:
        return None
    new = levels.copy()
    new[j, t_idx:] = base_j
    carry_jp = int(new[jp, t_idx - 1]) if t_idx > 0 else int(instance.initial_levels[jp])
    carry_j = base_j
    T = levels.shape[1]
    for tau in range(t_idx, T):
        pool = freed[tau - t_idx]
        start = max(int(new[jp, tau]), carry_jp)
        lv_jp, pool = _buy_up(instance, jp, start, pool, tau)
        new[jp, tau] = lv_jp
        carry_jp = lv_jp
        start_j = max(int(new[j, tau]), carry_j)
        lv_j, _ = _buy_up(instance, j, start_j, pool, tau)
        new[j, tau] = lv_j
        carry_j = lv_j
    return new if _schedule_feasible(instance, new) else None


def _move_split(instance, levels, j, jp, t_idx):
    """Evenly split the resources spent on j and jp over t..T; only legal when
    both stations end up open with at least one outlet in period t."""
    if int(levels[j, t_idx]) < 1:
        return None
    base_j = int(levels[j, t_idx - 1]) if t_idx > 0 else int(instance.initial_levels[j])
    base_jp = int(levels[jp, t_idx - 1]) if t_idx > 0 else int(instance.initial_levels[jp])
    freed = (_freed_per_period(instance, levels, j, t_idx, base_j)
             + _freed_per_period(instance, levels, jp, t_idx, base_jp))
    if freed.sum() <= 0:
        return None
    new = levels.copy()
    new[j, t_idx:] = base_j
    new[jp, t_idx:] = base_jp
    carry_j, carry_jp = base_j, base_jp
    T = levels.shape[1]
    for tau in range(t_idx, T):
        half = freed[tau - t_idx] / 2.0
        lv_j, _ = _buy_up(instance, j, max(int(new[j, tau]), carry_j), half, tau)
        lv_jp, _ = _buy_up(instance, jp, max(int(new[jp, tau]), carry_jp), half, tau)
        new[j, tau], new[jp, tau] = lv_j, lv_jp
        carry_j, carry_jp = lv_j, lv_jp
    if new[j, t_idx] < 1 or new[jp, t_idx] < 1:
        return None
    return new if _schedule_feasible(instance, new) else None


def _candidate_moves(instance, levels, t_idx, j):
    J = instance.n_stations
    yield ("add", j, None), _move_add(instance, levels, j, t_idx)
    for jp in range(J):
        if jp != j:
            yield ("transfer", j, jp), _move_transfer(instance, levels, j, jp, t_idx)
    for jp in range(j + 1, J):
        yield ("split", j, jp), _move_split(instance, levels, j, jp, t_idx)


def _local_search(instance, coverage, levels, improvement_mode, min_rel_gain,
                  deadline=None, trace=None):
    levels = levels.copy()
    f_cur = float(_period_values_from(coverage, levels, 1).sum())
    T = instance.horizon

    def delta_of(new_levels, t):
        new_tail = _period_values_from(coverage, new_levels, t)
        old_tail = _period_values_from(coverage, levels, t)
        return float(new_tail.sum() - old_tail.sum())

    for t in range(1, T + 1):
        t_idx = t - 1
        while True:
            if deadline is not None and time.perf_counter() > deadline:
                return levels, f_cur
            pass_start = f_cur
            if improvement_mode == "first":
                for j in range(instance.n_stations):
                    for move, cand in _candidate_moves(instance, levels, t_idx, j):
                        if cand is None:
                            continue
                        d = delta_of(cand, t)
                        if d > 1e-12:
                            levels = cand
                            f_cur += d
                            if trace is not None:
                                trace.append({"period": t, "move": move, "f": f_cur})
            else:
                best_d, best_cand, best_move = 0.0, None, None
                for j in range(instance.n_stations):
                    for move, cand in _candidate_moves(instance, levels, t_idx, j):
                        if cand is None:
                            continue
                        d = delta_of(cand, t)
                        if d > best_d + 1e-12:
                            best_d, best_cand, best_move = d, cand, move
                if best_cand is not None:
                    levels = best_cand
                    f_cur += best_d
                    if trace is not None:
                        trace.append({"period": t, "move": best_move, "f": f_cur})
            gained = f_cur - pass_start
            rel = (gained / pass_start) if pass_start > 0 else (np.inf if gained > 0 else 0.0)
            if rel < min_rel_gain:
                break
    return levels, f_cur


def local_search(instance: Instance, coverage: CoverageTensor, x: SolutionX,
                 improvement_mode="first", min_rel_gain=1e-4) -> SolutionX:
    """Add / Transfer / Split moves, period by period; never worsens f and
    never leaves the feasible set (infeasible moves are discarded)."""
    levels, _ = _local_search(instance, coverage, x.levels, improvement_mode,
                              min_rel_gain)
    max_k = int(instance.max_outlets.max())
    return SolutionX.from_levels(levels, max_k)


# -- GRASP -------------------------------------------------------------------------


def grasp(instance: Instance, coverage: CoverageTensor, config: GraspConfig | None = None
          ) -> HeuristicResult:
    """Construct / filter / locally-improve loop with incumbent tracking.

    Terminates when max_solutions candidates have been examined, max_filtered
    candidates have been filtered out, or the time limit is reached.
    """
    config = config or GraspConfig()
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    deadline = start + config.time_limit_s
    max_k = int(instance.max_outlets.max())

    incumbent, incumbent_f = None, -np.inf
    examined = filtered = 0
    warmup_ratios: list[float] = []
    max_rel = None
    trace = []
    termination = "max_solutions"
    while True:
        if examined >= config.max_solutions:
            termination = "max_solutions"
            break
        if filtered >= config.max_filtered:
            termination = "max_filtered"
            break
        if time.perf_counter() >= deadline:
            termination = "time_limit"
            break
        x_c = _grasp_construct_rule(instance, coverage, config.alpha, config.mode,
                                    rng, config.rcl_rule)
        examined += 1
        f_c = evaluate(instance, coverage, x_c)
        if grasp_filter(f_c, incumbent_f, max_rel):
            filtered += 1
            trace.append({"iteration": examined, "constructed_f": f_c, "filtered": True,
                          "incumbent": incumbent_f,
                          "elapsed": time.perf_counter() - start})
            continue
        levels, f_ls = _local_search(instance, coverage, x_c.levels,
                                     config.improvement_mode,
                                     config.local_search_min_rel_gain,
                                     deadline=deadline)
        if max_rel is None:
            if f_c > 0:
                warmup_ratios.append(f_ls / f_c)
            if len(warmup_ratios) >= config.filter_warmup:
                max_rel = max(warmup_ratios)
        if f_ls > incumbent_f:
            incumbent, incumbent_f = levels, f_ls
        trace.append({"iteration": examined, "constructed_f": f_c, "filtered": False,
                      "after_search_f": f_ls, "incumbent": incumbent_f,
                      "elapsed": time.perf_counter() - start})

    if incumbent is None:
        x = SolutionX.zeros(instance)
        incumbent_f = evaluate(instance, coverage, x)
    else:
        x = SolutionX.from_levels(incumbent, max_k)
    return HeuristicResult(x, float(incumbent_f), time.perf_counter() - start, trace,
                           seed=config.seed, termination=termination)


# -- rolling horizon ------------------------------------------------------------------


def _period_time_limits(config: RollingHorizonConfig, T):
    if config.allocation == "even":
        return [config.total_time_limit_s / T] * T
    limits, remaining = [], config.total_time_limit_s
    share = config.first_period_share_s
    for _ in range(T):
        lim = min(share, remaining)
        limits.append(lim)
        remaining -= lim
        share /= 2.0
    return limits


def rolling_horizon(instance: Instance, coverage: CoverageTensor,
                    config: RollingHorizonConfig | None = None,
                    solver=None, enumeration_budget=None) -> HeuristicResult:
    """Fix one period at a time: solve the period-t MC restriction under its
    time share, freeze the outcome, move on. Each period model carries the
    previous configuration as fixed lower bounds, which is also its warm
    start. Falls back to per-period enumeration when no solver is configured
    and the period state space fits the enumeration budget."""
    config = config or RollingHorizonConfig()
    start = time.perf_counter()
    T = instance.horizon
    limits = _period_time_limits(config, T)
    command = resolve_solver_command(solver)
    levels = _initial_levels(instance)
    base = instance.initial_levels.copy()
    trace = []
    for t in range(1, T + 1):
        if command is not None:
            model = build_mc_period(instance, coverage, t, base)
            result = solve_external(model, command, time_limit_s=limits[t - 1])
            if result.status == STATUS_NOT_CONFIGURED or not result.ok:
                raise HeuristicError(
                    f"period {t}: solver failed with status {result.status} ({result.detail})")
            x_t = extract_solution_x(instance, result.values)
            new_levels = x_t.levels[:, t - 1]
            trace.append({"period": t, "limit_s": limits[t - 1], "status": result.status,
                          "objective": result.objective, "wall_time": result.wall_time})
        else:
            new_levels = _best_period_by_enumeration(instance, coverage, t, base,
                                                     enumeration_budget)
            trace.append({"period": t, "limit_s": limits[t - 1], "status": "enumerated",
                          "objective": None, "wall_time": None})
        levels[:, t - 1:] = new_levels[:, None]
        base = new_levels
    max_k = int(instance.max_outlets.max())
    x = SolutionX.from_levels(levels, max_k)
    f = evaluate(instance, coverage, x)
    return HeuristicResult(x, f, time.perf_counter() - start, trace,
                           termination="completed")


def _best_period_by_enumeration(instance, coverage, t, base, budget):
    budget = budget or EnumerationBudget()
    options = period_extensions(instance, tuple(int(v) for v in base), t - 1)
    if len(options) > budget.max_configurations:
        raise HeuristicError(
            f"period {t}: no solver configured and {len(options)} period states "
            f"exceed the enumeration budget")
    best_v, best = -np.inf, None
    for opt in options:
        v = _period_value(coverage, np.asarray(opt), t)
        if v > best_v:
            best_v, best = v, opt
    return np.asarray(best, dtype=int)
