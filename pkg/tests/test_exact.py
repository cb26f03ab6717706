import numpy as np
import pytest

from evcover.covering import build_coverage, evaluate
from evcover.datasets import generate_small_instance
from evcover.exact import (EnumerationBudget, EnumerationCapExceeded, brute_force_optimum,
                           count_feasible, enumerate_feasible, random_feasible_solution)
from evcover.instance import SolutionX, validate_solution

from conftest import manual_instance


def recursive_count_oracle(inst):
    """Independent counter: plain recursion over per-period level vectors."""
    cost = inst.cost_budget.outlet_cost
    budgets = inst.cost_budget.budgets

    def options(base, t):
        outs = [[]]
        for j in range(inst.n_stations):
            new = []
            for partial in outs:
                for lv in range(base[j], inst.stations[j].max_outlets + 1):
                    new.append(partial + [lv])
            outs = new
        feas = []
        for vec in outs:
            spend = sum(cost[j, k - 1, t]
                        for j in range(inst.n_stations)
                        for k in range(base[j] + 1, vec[j] + 1))
            if spend <= budgets[t] + 1e-9:
                feas.append(tuple(vec))
        return feas

    def count(base, t):
        if t == inst.horizon:
            return 1
        return sum(count(o, t + 1) for o in options(base, t))

    return count(tuple(inst.initial_levels), 0)


def test_single_station_three_levels():
    inst = manual_instance(max_outlets=2, budget=1000.0)
    assert count_feasible(inst) == 3
    assert len(list(enumerate_feasible(inst))) == 3


def test_budget_allows_only_one_opening():
    inst = manual_instance(n_stations=2, max_outlets=1, budget=150.0)
    xs = list(enumerate_feasible(inst))
    assert len(xs) == 3  # nothing, station 1, station 2


def test_count_matches_recursion_oracle():
    for seed in (41, 42, 43):
        inst = generate_small_instance(seed, n_stations=3, horizon=2, max_outlets=2)
        assert count_feasible(inst) == recursive_count_oracle(inst)


def test_enumeration_unique_and_feasible():
    inst = generate_small_instance(44, n_stations=3, horizon=2)
    seen = set()
    for x in enumerate_feasible(inst):
        key = x.binary.tobytes()
        assert key not in seen
        seen.add(key)
        assert validate_solution(inst, x).ok
    assert len(seen) == count_feasible(inst)


def test_lexicographic_order():
    inst = manual_instance(n_stations=2, max_outlets=1, budget=1000.0)
    levels = [tuple(x.levels[:, 0]) for x in enumerate_feasible(inst)]
    assert levels == sorted(levels)


def test_cap_refusal_reports_size():
    inst = generate_small_instance(45, n_stations=3, horizon=2)
    with pytest.raises(EnumerationCapExceeded) as err:
        list(enumerate_feasible(inst, EnumerationBudget(max_configurations=2)))
    assert err.value.count == count_feasible(inst)


def test_zero_budget_optimum_is_zero_solution():
    inst = manual_instance(budget=0.0)
    cov = build_coverage(inst)
    x, f = brute_force_optimum(inst, cov)
    assert f == 0.0
    assert (x.levels == 0).all()


def test_dominant_station_is_selected():
    # station 1 covers everything at one outlet; station 2 never covers
    inst = manual_instance(n_stations=2, kappa_station=4.5, budget=150.0, scenarios=5,
                           eps=None)
    eps = np.zeros((3, 5, 1))
    eps[2, :, 0] = -50.0  # bury station 2
    inst = manual_instance(n_stations=2, kappa_station=4.5, budget=150.0, scenarios=5,
                           eps=eps)
    cov = build_coverage(inst)
    x, f = brute_force_optimum(inst, cov)
    assert x.levels[0, 0] >= 1
    assert x.levels[1, 0] == 0
    assert f == pytest.approx(100.0)


def test_certificate_against_random_solutions(small_instance, small_coverage):
    x_star, f_star = brute_force_optimum(small_instance, small_coverage)
    rng = np.random.default_rng(12)
    for _ in range(200):
        x = random_feasible_solution(small_instance, rng)
        assert f_star >= evaluate(small_instance, small_coverage, x) - 1e-9
