"""Coverage preprocessing and solution evaluation.

A station j with k outlets covers the triplet (t, i, r) when it is open
(k >= 1), considered by class i in period t, and its utility with k outlets
is at least the opt-out utility of that triplet. Everything downstream
(objective evaluation, greedy scores, MC covering rows) reduces to set
operations over triplets, so coverage is stored as packed 64-bit bitsets
over a flattened triplet index: scoring is a popcount weighted per
(period, class) block.

Triplet layout: blocks ordered by (period, class); each block holds the R_i
scenarios of one class in one period, padded to whole 64-bit words. Padding
bits stay zero in every mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .instance import HOME, OPT_OUT, Instance, InstanceError, SolutionX


class CoverageError(ValueError):
    pass


class TripletIndex:
    """Flattened (period, class, scenario) index with word-aligned blocks."""

    def __init__(self, instance: Instance):
        T, C = instance.horizon, instance.n_classes
        R = np.array([uc.scenario_count for uc in instance.user_classes], dtype=int)
        self.horizon, self.n_classes = T, C
        self.scenarios = R
        self.block_bits = np.tile(R, T)                      # block b = t_idx * C + ci
        self.block_words = (self.block_bits + 63) // 64
        self.word_start = np.zeros(T * C + 1, dtype=int)
        np.cumsum(self.block_words, out=self.word_start[1:])
        self.bit_start = np.zeros(T * C + 1, dtype=int)
        np.cumsum(self.block_bits, out=self.bit_start[1:])
        self.n_words = int(self.word_start[-1])
        self.n_triplets = int(self.bit_start[-1])

        pops = np.array([uc.populations for uc in instance.user_classes])  # (C, T)
        self.block_weight = (pops.T / R[None, :]).reshape(-1)              # N_i^t / R_i
        self.word_weights = np.repeat(self.block_weight, self.block_words)
        self.word_weights.flags.writeable = False

    def block(self, class_index, t_index):
        return t_index * self.n_classes + class_index

    def word_slice(self, t_from, t_to=None):
        """Words of periods t_from..t_to (1-based, inclusive); t_to defaults to t_from."""
        t_to = t_from if t_to is None else t_to
        b0 = (t_from - 1) * self.n_classes
        b1 = t_to * self.n_classes
        return slice(int(self.word_start[b0]), int(self.word_start[b1]))

    def triplet_id(self, class_index, t_index, r):
        return int(self.bit_start[self.block(class_index, t_index)]) + r

    def pack_block_rows(self, bools):
        """Pack (n_rows, R) booleans into (n_rows, words) little-endian uint64."""
        arr = np.asarray(bools, dtype=bool)
        n_rows, R = arr.shape
        words = (R + 63) // 64
        bytes_ = np.packbits(arr, axis=1, bitorder="little")
        padded = np.zeros((n_rows, words * 8), dtype=np.uint8)
        padded[:, : bytes_.shape[1]] = bytes_
        return padded.view("<u8")


@dataclass
class HomePreprocess:
    """Triplets guaranteed covered by home charging, and the reduced C0 sets."""

    forced: tuple          # per class: (R, T) bool array, or None when no home alternative
    forced_bits: np.ndarray
    forced_mass: float
    reduced_c0: tuple      # per class, per period: alternatives kept (opt-out only)


def compute_abar(instance: Instance) -> np.ndarray:
    """Closed-station utility level per (class, period): min over considered
    stations and scenarios of kappa + eps. NaN where no station is considered."""
    T = instance.horizon
    abar = np.full((instance.n_classes, T), np.nan)
    for ci in range(instance.n_classes):
        alts = instance.choice_sets.alternatives[ci]
        kap = instance.utility_params.kappa[ci]
        eps = instance.error_tensor[ci]
        for t in range(T):
            vals = [
                (kap[pos, t] + eps[pos, :, t]).min()
                for pos, alt in enumerate(alts)
                if alt in instance.choice_sets.c1[ci][t]
            ]
            if vals:
                abar[ci, t] = min(vals)
    return abar


class UtilityLadder:
    """Per-class utilities u[alt, r, t, k] for k = 0..max_outlets.

    Station rows hold the closed-station level abar at k = 0 and
    kappa + eps + cumulative beta for k >= 1; exogenous rows (opt-out, home)
    are constant in k. Nondecreasing in k because increments are >= 0.
    """

    def __init__(self, instance: Instance, class_index: int, abar=None):
        ci = class_index
        alts = instance.choice_sets.alternatives[ci]
        kap = instance.utility_params.kappa[ci]
        bet = instance.utility_params.beta[ci]
        eps = instance.error_tensor[ci]
        R, T = eps.shape[1], eps.shape[2]
        max_k = bet.shape[1]
        if abar is None:
            abar = compute_abar(instance)
        base = kap[:, None, :] + eps  # (n_alts, R, T)
        u = np.empty((len(alts), R, T, max_k + 1))
        u[:, :, :, 0] = base
        cum = np.cumsum(bet, axis=1)  # (n_alts, max_k, T)
        u[:, :, :, 1:] = base[:, :, :, None] + cum.transpose(0, 2, 1)[:, None, :, :]
        for pos, alt in enumerate(alts):
            if alt not in (OPT_OUT, HOME):
                u[pos, :, :, 0] = abar[ci, :][None, :]
            else:
                u[pos, :, :, 1:] = base[pos, :, :, None]
        self.u = u
        self.alternatives = alts

    def nondecreasing_in_k(self):
        return bool((np.diff(self.u, axis=3) >= -1e-12).all())


def optout_utility(instance: Instance, t, i, r) -> float:
    """kappa_0 + eps_0 for class index i, period t (1-based), scenario r (0-based)."""
    pos = instance.choice_sets.alt_index[i][OPT_OUT]
    return float(instance.utility_params.kappa[i][pos, t - 1]
                 + instance.error_tensor[i][pos, r, t - 1])


def station_utility_at_k(instance: Instance, t, i, r, j, k, abar=None) -> float:
    """Utility of station j with exactly k outlets for triplet (t, i, r); k = 0 is closed."""
    if j not in instance.choice_sets.c1[i][t - 1]:
        raise CoverageError(f"station {j} not considered by class index {i} in period {t}")
    if k == 0:
        if abar is None:
            abar = compute_abar(instance)
        return float(abar[i, t - 1])
    m_j = instance.stations[instance.station_index[j]].max_outlets
    if not 1 <= k <= m_j:
        raise CoverageError(f"k={k} outside 1..{m_j}")
    pos = instance.choice_sets.alt_index[i][j]
    kap = instance.utility_params.kappa[i][pos, t - 1]
    eps = instance.error_tensor[i][pos, r, t - 1]
    cum = instance.utility_params.beta[i][pos, :k, t - 1].sum()
    return float(kap + eps + cum)


def preprocess_home_charging(instance: Instance) -> HomePreprocess:
    """Split triplets on home charging: strictly better than opt-out means the
    EV is purchased regardless of x (forced covered); otherwise the home
    alternative can never be selected and is dropped, leaving C0 = {opt-out}."""
    trip = TripletIndex(instance)
    forced_bits = np.zeros(trip.n_words, dtype=np.uint64)
    forced, reduced_c0, mass = [], [], 0.0
    for ci, uc in enumerate(instance.user_classes):
        alt_index = instance.choice_sets.alt_index[ci]
        if HOME not in alt_index:
            forced.append(None)
            reduced_c0.append(instance.choice_sets.c0[ci])
            continue
        kap = instance.utility_params.kappa[ci]
        eps = instance.error_tensor[ci]
        h, o = alt_index[HOME], alt_index[OPT_OUT]
        u_home = kap[h, None, :] + eps[h]   # (R, T)
        u_opt = kap[o, None, :] + eps[o]
        f = u_home > u_opt
        forced.append(f)
        reduced_c0.append(tuple((OPT_OUT,) for _ in range(instance.horizon)))
        for t in range(instance.horizon):
            b = trip.block(ci, t)
            ws, we = trip.word_start[b], trip.word_start[b + 1]
            forced_bits[ws:we] |= trip.pack_block_rows(f[None, :, t])[0]
            mass += trip.block_weight[b] * int(f[:, t].sum())
    return HomePreprocess(tuple(forced), forced_bits, mass, tuple(reduced_c0))


class CoverageTensor:
    """Pre-computed coverage bits a[j][k][triplet] plus covering thresholds.

    min_k[j, p] is the smallest outlet count at which station j covers
    triplet p (0 when it never covers); a[j][k] is derivable as
    min_k >= 1 and min_k <= k, and is materialised as packed bitsets for
    popcount scoring. forced_bits marks triplets covered regardless of x.
    """

    def __init__(self, instance: Instance, trip: TripletIndex, min_k, a_bits,
                 slot_base, forced_bits, forced_mass, instance_hash=None):
        self.trip = trip
        self.station_ids = tuple(s.id for s in instance.stations)
        self.max_outlets = instance.max_outlets.copy()
        self.min_k = min_k
        self.a_bits = a_bits
        self.slot_base = slot_base  # slot row of (station_index j, k) = slot_base[j] + k - 1
        self.forced_bits = forced_bits
        self.forced_mass = float(forced_mass)
        self.instance_hash = instance_hash
        self.horizon = trip.horizon
        for arr in (self.min_k, self.a_bits, self.forced_bits):
            arr.flags.writeable = False

    # -- raw access -----------------------------------------------------

    def slot(self, j_idx, k):
        return int(self.slot_base[j_idx]) + k - 1

    def a_entry(self, j_idx, k, triplet_id):
        mk = self.min_k[j_idx, triplet_id]
        return 1 if 0 < mk <= k else 0

    # -- bitset machinery -------------------------------------------------

    def active_slots(self, levels_t):
        out = []
        for j, lv in enumerate(levels_t):
            base = self.slot_base[j]
            out.extend(range(base, base + int(lv)))
        return out

    def cover_words(self, levels) -> np.ndarray:
        """Covered-triplet bits for a full outlet schedule (n_stations, T)."""
        words = np.zeros(self.trip.n_words, dtype=np.uint64)
        for t in range(1, self.horizon + 1):
            sl = self.trip.word_slice(t)
            rows = self.active_slots(levels[:, t - 1])
            if rows:
                words[sl] = np.bitwise_or.reduce(self.a_bits[rows, sl], axis=0)
        words |= self.forced_bits
        return words

    def held_cover_words(self, levels_t, t_from) -> np.ndarray:
        """Covered bits over periods t_from..T with the period-t_from levels held."""
        sl = self.trip.word_slice(t_from, self.horizon)
        rows = self.active_slots(levels_t)
        out = self.forced_bits[sl].copy()
        if rows:
            out |= np.bitwise_or.reduce(self.a_bits[rows, sl], axis=0)
        return out

    def value_of_words(self, words, t_from=1, t_to=None) -> float:
        """Weighted covered mass of a bit vector restricted to periods t_from..t_to."""
        sl = self.trip.word_slice(t_from, t_to if t_to is not None else self.horizon)
        w = words if words.shape[0] == sl.stop - sl.start else words[sl]
        return float(np.bitwise_count(w).astype(np.float64) @ self.trip.word_weights[sl])

    def slot_gains(self, slot_rows, base_words, t_from, t_to=None):
        """For each candidate slot: weighted mass of triplets it newly covers
        against base_words, over periods t_from..t_to. base_words must already
        be restricted to the same period span."""
        sl = self.trip.word_slice(t_from, t_to if t_to is not None else self.horizon)
        cand = self.a_bits[slot_rows][:, sl]
        fresh = cand & ~base_words[None, :]
        return np.bitwise_count(fresh).astype(np.float64) @ self.trip.word_weights[sl]


def build_coverage(instance: Instance, instance_hash=None) -> CoverageTensor:
    """Compute min-k covering thresholds and packed coverage bits for an instance."""
    trip = TripletIndex(instance)
    J, T = instance.n_stations, instance.horizon
    pre = preprocess_home_charging(instance)

    min_k = np.zeros((J, trip.n_triplets), dtype=np.uint8)
    slot_base = np.zeros(J, dtype=int)
    np.cumsum(instance.max_outlets[:-1], out=slot_base[1:])
    n_slots = int(instance.max_outlets.sum())
    a_bits = np.zeros((n_slots, trip.n_words), dtype=np.uint64)

    for ci in range(instance.n_classes):
        alt_index = instance.choice_sets.alt_index[ci]
        kap = instance.utility_params.kappa[ci]
        bet = instance.utility_params.beta[ci]
        eps = instance.error_tensor[ci]
        o = alt_index[OPT_OUT]
        u0 = kap[o, None, :] + eps[o]  # (R, T)
        R = eps.shape[1]
        considered = instance.choice_sets.c1[ci]
        for alt, pos in alt_index.items():
            if alt in (OPT_OUT, HOME):
                continue
            j = instance.station_index[alt]
            m_j = instance.stations[j].max_outlets
            cum = np.cumsum(bet[pos, :m_j, :], axis=0)          # (m_j, T)
            gap = u0 - kap[pos, None, :] - eps[pos]             # (R, T)
            mk = np.empty((R, T), dtype=np.int64)
            for t in range(T):
                mk[:, t] = np.searchsorted(cum[:, t], gap[:, t], side="left") + 1
            mk[mk > m_j] = 0
            member = np.array([alt in considered[t] for t in range(T)])
            mk[:, ~member] = 0
            for t in range(T):
                b = trip.block(ci, t)
                p0 = trip.bit_start[b]
                min_k[j, p0 : p0 + R] = mk[:, t]
                if mk[:, t].any():
                    ws, we = trip.word_start[b], trip.word_start[b + 1]
                    rows_bool = (mk[None, :, t] > 0) & (
                        mk[None, :, t] <= np.arange(1, m_j + 1)[:, None])
                    a_bits[slot_base[j] : slot_base[j] + m_j, ws:we] = trip.pack_block_rows(
                        rows_bool)

    return CoverageTensor(instance, trip, min_k, a_bits, slot_base,
                          pre.forced_bits, pre.forced_mass,
                          instance_hash=instance_hash)


# -- evaluation ------------------------------------------------------------


def evaluate(instance: Instance, coverage: CoverageTensor, x: SolutionX) -> float:
    """Solution quality f(x): weighted count of covered triplets, forced included."""
    levels = _checked_levels(instance, coverage, x)
    return coverage.value_of_words(coverage.cover_words(levels))


def evaluate_per_period(instance: Instance, coverage: CoverageTensor, x: SolutionX):
    levels = _checked_levels(instance, coverage, x)
    words = coverage.cover_words(levels)
    return np.array([coverage.value_of_words(words, t, t)
                     for t in range(1, coverage.horizon + 1)])


def _checked_levels(instance, coverage, x):
    if x.binary.shape[0] != len(coverage.station_ids) or x.binary.shape[2] != coverage.horizon:
        raise CoverageError("solution dimensions do not match coverage tensor")
    if not x.ladder_ok():
        raise InstanceError("ladder violated")
    return x.levels


def score_myopic(coverage: CoverageTensor, x: SolutionX, t: int) -> float:
    """Period-t term of f under the period-t configuration of x."""
    _check_period(coverage, t)
    levels = x.levels
    words = coverage.held_cover_words(levels[:, t - 1], t)
    return coverage.value_of_words(words[: _period_width(coverage, t)], t, t)


def score_hyperoptic(coverage: CoverageTensor, x: SolutionX, t: int) -> float:
    """Terms t..T of f with the period-t configuration held for every later period."""
    _check_period(coverage, t)
    levels = x.levels
    words = coverage.held_cover_words(levels[:, t - 1], t)
    return float(np.bitwise_count(words).astype(np.float64)
                 @ coverage.trip.word_weights[coverage.trip.word_slice(t, coverage.horizon)])


def _check_period(coverage, t):
    if not 1 <= t <= coverage.horizon:
        raise CoverageError(f"period {t} outside 1..{coverage.horizon}")


def _period_width(coverage, t):
    sl = coverage.trip.word_slice(t)
    return sl.stop - sl.start


def gap(best_value: float, value: float) -> float:
    """Percentage gap to the best known value: 100 * (best - value) / best."""
    if best_value <= 0:
        raise CoverageError("gap undefined for best value <= 0")
    return 100.0 * (best_value - value) / best_value


# -- coverage cache ---------------------------------------------------------


def save_coverage(coverage: CoverageTensor, path, instance_hash):
    meta = {"hash": instance_hash, "horizon": coverage.horizon,
            "station_ids": list(coverage.station_ids)}
    np.savez_compressed(
        path, meta=json.dumps(meta), min_k=coverage.min_k, a_bits=coverage.a_bits,
        forced_bits=coverage.forced_bits, slot_base=coverage.slot_base,
        max_outlets=coverage.max_outlets, forced_mass=np.array([coverage.forced_mass]),
    )


def load_coverage(path, instance: Instance, instance_hash):
    """Reload a cached tensor; returns None when the content hash differs."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta["hash"] != instance_hash:
                return None
            trip = TripletIndex(instance)
            return CoverageTensor(
                instance, trip, data["min_k"].copy(), data["a_bits"].copy(),
                data["slot_base"].copy(), data["forced_bits"].copy(),
                float(data["forced_mass"][0]), instance_hash=instance_hash,
            )
    except FileNotFoundError:
        return None
