import numpy as np
import pytest

from evcover.covering import (CoverageError, CoverageTensor, TripletIndex, UtilityLadder,
                              build_coverage, compute_abar, evaluate, evaluate_per_period,
                              gap, load_coverage, optout_utility, preprocess_home_charging,
                              save_coverage, score_hyperoptic, score_myopic,
                              station_utility_at_k)
from evcover.datasets import generate_small_instance
from evcover.exact import random_feasible_solution
from evcover.instance import HOME, OPT_OUT, InstanceError, SolutionX

from conftest import manual_instance


def naive_cover_entry(inst, j_id, k, t, ci, r):
    """Definition applied literally, scalar by scalar."""
    if k < 1 or j_id not in inst.choice_sets.c1[ci][t - 1]:
        return 0
    u0 = optout_utility(inst, t, ci, r)
    return 1 if station_utility_at_k(inst, t, ci, r, j_id, k) >= u0 else 0


def full_levels(inst):
    return SolutionX.from_levels(
        np.repeat(inst.max_outlets[:, None], inst.horizon, axis=1),
        int(inst.max_outlets.max()))


# -- utilities ---------------------------------------------------------------


def test_optout_utility_zero_error():
    inst = manual_instance()
    assert optout_utility(inst, 1, 0, 0) == pytest.approx(4.5)


def test_optout_utility_additive_in_error():
    eps = np.zeros((2, 1, 1))
    eps[0, 0, 0] = -1.2
    inst = manual_instance(eps=eps)
    assert optout_utility(inst, 1, 0, 0) == pytest.approx(3.3)


def test_optout_matches_utility_ladder_row():
    inst = generate_small_instance(23)
    ladder = UtilityLadder(inst, 0)
    pos = inst.choice_sets.alt_index[0][OPT_OUT]
    for r in range(3):
        for t in range(1, inst.horizon + 1):
            assert optout_utility(inst, t, 0, r) == pytest.approx(
                float(ladder.u[pos, r, t - 1, 0]))


def test_station_utility_linear_ladder():
    inst = manual_instance(n_stations=1, max_outlets=6, kappa_station=1.0, beta=0.281)
    assert station_utility_at_k(inst, 1, 0, 0, 1, 3) == pytest.approx(1.843)


def test_station_utility_k_zero_is_abar():
    inst = generate_small_instance(29)
    abar = compute_abar(inst)
    v = station_utility_at_k(inst, 1, 0, 0, inst.stations[0].id, 0)
    assert v == pytest.approx(abar[0, 0])


def test_station_utility_rejects_unconsidered_station():
    inst = manual_instance()
    with pytest.raises(CoverageError, match="considered"):
        station_utility_at_k(inst, 1, 0, 0, 99, 1)


def test_covering_threshold_example_shape():
    # station below opt-out until the fourth outlet: threshold k = 4
    inst = manual_instance(max_outlets=6, kappa_station=4.5 - 4 * 0.281 + 0.01, beta=0.281)
    cov = build_coverage(inst)
    p = cov.trip.triplet_id(0, 0, 0)
    assert cov.min_k[0, p] == 4
    for k in range(1, 7):
        assert cov.a_entry(0, k, p) == (1 if k >= 4 else 0)


def test_station_that_never_covers_has_zero_row():
    inst = manual_instance(max_outlets=6, kappa_station=-10.0, beta=0.0)
    cov = build_coverage(inst)
    p = cov.trip.triplet_id(0, 0, 0)
    assert cov.min_k[0, p] == 0
    assert all(cov.a_entry(0, k, p) == 0 for k in range(1, 7))


def test_ladder_nondecreasing_in_k():
    inst = generate_small_instance(31)
    for ci in range(inst.n_classes):
        assert UtilityLadder(inst, ci).nondecreasing_in_k()


# -- coverage tensor against the naive oracle --------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_tensor_equals_naive_recomputation(seed):
    inst = generate_small_instance(100 + seed, n_stations=2, n_nodes=5, horizon=2,
                                   max_scenarios=6)
    cov = build_coverage(inst)
    for ci, uc in enumerate(inst.user_classes):
        for t in range(1, inst.horizon + 1):
            for r in range(uc.scenario_count):
                p = cov.trip.triplet_id(ci, t - 1, r)
                for j, st in enumerate(inst.stations):
                    for k in range(1, st.max_outlets + 1):
                        assert cov.a_entry(j, k, p) == naive_cover_entry(
                            inst, st.id, k, t, ci, r)
                    # min-k threshold matches a linear scan
                    scan = next((k for k in range(1, st.max_outlets + 1)
                                 if naive_cover_entry(inst, st.id, k, t, ci, r)), 0)
                    assert cov.min_k[j, p] == scan


def test_tensor_monotone_in_k(small_instance, small_coverage):
    cov = small_coverage
    for j in range(small_instance.n_stations):
        prev = np.zeros(cov.trip.n_triplets, dtype=bool)
        for k in range(1, small_instance.stations[j].max_outlets + 1):
            cur = (cov.min_k[j] > 0) & (cov.min_k[j] <= k)
            assert (prev <= cur).all()
            prev = cur


def test_tensor_size_matches_triplet_count(small_instance, small_coverage):
    want = sum(uc.scenario_count for uc in small_instance.user_classes) \
        * small_instance.horizon
    assert small_coverage.trip.n_triplets == want


# -- home-charging preprocessing ----------------------------------------------


def test_home_dominates_forces_coverage():
    inst = manual_instance(home_kappa=5.5)  # home > opt-out for zero errors
    pre = preprocess_home_charging(inst)
    assert pre.forced[0].all()
    assert pre.forced_mass == pytest.approx(100.0)
    assert pre.reduced_c0[0][0] == (OPT_OUT,)


def test_home_dominated_is_dropped():
    inst = manual_instance(home_kappa=3.5)
    pre = preprocess_home_charging(inst)
    assert not pre.forced[0].any()
    assert pre.forced_mass == 0.0


def test_class_without_home_unchanged():
    inst = manual_instance()
    pre = preprocess_home_charging(inst)
    assert pre.forced[0] is None
    assert pre.reduced_c0[0] == inst.choice_sets.c0[0]


# -- evaluation ----------------------------------------------------------------


def test_zero_solution_scores_zero(small_instance, small_coverage):
    assert evaluate(small_instance, small_coverage,
                    SolutionX.zeros(small_instance)) == 0.0


def test_zero_solution_home_charging_baseline():
    inst = manual_instance(home_kappa=5.5, scenarios=4)
    cov = build_coverage(inst)
    # direct sum over forced triplets of N/R
    want = sum(inst.user_classes[0].populations[0] / 4 for _ in range(4))
    assert evaluate(inst, cov, SolutionX.zeros(inst)) == pytest.approx(want)


def test_saturation_equals_weighted_any_row(small_instance, small_coverage):
    inst, cov = small_instance, small_coverage
    got = evaluate(inst, cov, full_levels(inst))
    want = 0.0
    for ci, uc in enumerate(inst.user_classes):
        for t in range(1, inst.horizon + 1):
            for r in range(uc.scenario_count):
                p = cov.trip.triplet_id(ci, t - 1, r)
                if (cov.min_k[:, p] > 0).any():
                    want += uc.populations[t - 1] / uc.scenario_count
    assert got == pytest.approx(want)


def test_min_clamp_second_cover_changes_nothing():
    inst = manual_instance(n_stations=2, kappa_station=6.0)  # both cover at k=1
    cov = build_coverage(inst)
    one = SolutionX.from_levels(np.array([[1], [0]]), 2)
    both = SolutionX.from_levels(np.array([[1], [1]]), 2)
    assert evaluate(inst, cov, one) == evaluate(inst, cov, both) == pytest.approx(100.0)


def test_monotone_in_x(small_instance, small_coverage):
    rng = np.random.default_rng(8)
    for _ in range(30):
        x = random_feasible_solution(small_instance, rng)
        levels = x.levels
        shrunk = np.maximum(levels - rng.integers(0, 2, size=levels.shape), 0)
        shrunk = np.maximum.accumulate(shrunk, axis=1)  # keep persistence
        x_small = SolutionX.from_levels(shrunk, int(small_instance.max_outlets.max()))
        assert evaluate(small_instance, small_coverage, x) >= \
            evaluate(small_instance, small_coverage, x_small) - 1e-12


def test_evaluate_rejects_dimension_mismatch(small_instance, small_coverage):
    with pytest.raises(CoverageError, match="dimension"):
        evaluate(small_instance, small_coverage, SolutionX(np.zeros((1, 2, 1), dtype=np.int8)))


def test_evaluate_rejects_ladder_violation(small_instance, small_coverage):
    J = small_instance.n_stations
    bad = np.zeros((J, 2, small_instance.horizon), dtype=np.int8)
    bad[0, 1, 0] = 1
    with pytest.raises(InstanceError, match="ladder"):
        evaluate(small_instance, small_coverage, SolutionX(bad))


def test_per_period_breakdown_sums_to_total(small_instance, small_coverage):
    rng = np.random.default_rng(3)
    x = random_feasible_solution(small_instance, rng)
    parts = evaluate_per_period(small_instance, small_coverage, x)
    assert parts.sum() == pytest.approx(evaluate(small_instance, small_coverage, x))


# -- score functions -------------------------------------------------------------


def test_scores_match_restricted_brute_force(small_instance, small_coverage):
    inst, cov = small_instance, small_coverage
    rng = np.random.default_rng(5)
    T = inst.horizon
    max_k = int(inst.max_outlets.max())
    for _ in range(10):
        x = random_feasible_solution(inst, rng)
        for t in range(1, T + 1):
            held = np.repeat(x.levels[:, t - 1:t], T, axis=1)
            x_held = SolutionX.from_levels(held, max_k)
            per = evaluate_per_period(inst, cov, x_held)
            assert score_myopic(cov, x, t) == pytest.approx(per[t - 1])
            assert score_hyperoptic(cov, x, t) == pytest.approx(per[t - 1:].sum())


def test_last_period_scores_coincide(small_instance, small_coverage):
    rng = np.random.default_rng(6)
    x = random_feasible_solution(small_instance, rng)
    T = small_instance.horizon
    assert score_myopic(small_coverage, x, T) == pytest.approx(
        score_hyperoptic(small_coverage, x, T))


def test_hyperoptic_dominates_myopic(small_instance, small_coverage):
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = random_feasible_solution(small_instance, rng)
        for t in range(1, small_instance.horizon + 1):
            assert score_hyperoptic(small_coverage, x, t) >= \
                score_myopic(small_coverage, x, t) - 1e-12


def test_score_rejects_bad_period(small_instance, small_coverage):
    x = SolutionX.zeros(small_instance)
    with pytest.raises(CoverageError):
        score_myopic(small_coverage, x, 0)
    with pytest.raises(CoverageError):
        score_hyperoptic(small_coverage, x, small_instance.horizon + 1)


# -- gap ---------------------------------------------------------------------------


def test_gap_examples():
    assert gap(5.0, 5.0) == 0.0
    assert gap(200.0, 100.0) == pytest.approx(50.0)
    with pytest.raises(CoverageError):
        gap(0.0, 1.0)


# -- cache ---------------------------------------------------------------------------


def test_coverage_cache_round_trip(tmp_path, small_instance, small_coverage):
    h = small_instance.content_hash()
    path = tmp_path / "cov.npz"
    save_coverage(small_coverage, path, h)
    loaded = load_coverage(path, small_instance, h)
    assert loaded is not None
    np.testing.assert_array_equal(loaded.min_k, small_coverage.min_k)
    np.testing.assert_array_equal(loaded.a_bits, small_coverage.a_bits)
    assert loaded.forced_mass == small_coverage.forced_mass
    assert load_coverage(path, small_instance, "other-hash") is None
    assert load_coverage(tmp_path / "missing.npz", small_instance, h) is None
