import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pacmarket.core import (
    BURN,
    Additive,
    MarketError,
    MarketInstance,
    Outcome,
    SampleSet,
    SingleMinded,
    ThresholdSubmodular,
    UnitDemand,
    affordable,
    bundle,
    check_budgets,
    evaluate,
    full,
    mask_array,
    members,
    membership,
    popcounts,
    validate_outcome,
)

from conftest import seeds


def brute_threshold_value(values, slot_of, th, goods):
    best = {}
    for g in goods:
        best[slot_of[g]] = max(best.get(slot_of[g], 0.0), values[g])
    return sum(sorted(best.values(), reverse=True)[:th])


class TestBundles:
    def test_round_trip(self):
        assert members(bundle([3, 0, 5])) == [0, 3, 5]
        assert bundle([]) == 0
        assert members(0) == []

    def test_negative_index_rejected(self):
        with pytest.raises(MarketError):
            bundle([-1])

    @given(st.sets(st.integers(0, 140)))
    def test_members_inverts_bundle(self, goods):
        assert members(bundle(goods)) == sorted(goods)

    def test_wide_markets_use_object_arrays(self):
        arr = mask_array([1 << 100, 3], 101)
        assert arr.dtype == object
        mem = membership(arr, 101)
        assert mem[0, 100] and mem[1, 0] and mem[1, 1] and mem.sum() == 3
        assert list(popcounts(arr)) == [1, 2]

    def test_narrow_markets_use_uint64(self):
        arr = mask_array([0b101, full(64)], 64)
        assert arr.dtype == np.uint64
        assert list(popcounts(arr)) == [2, 64]


class TestEvaluate:
    def test_unit_demand_max_rule(self):
        ud = UnitDemand([[5, 3, 1]])
        assert evaluate(ud, 0, bundle([0, 2])) == 5
        assert evaluate(ud, 0, 0) == 0

    def test_single_minded_containment(self):
        sm = SingleMinded((bundle([1, 2]),), 3)
        assert evaluate(sm, 0, bundle([1])) == 0
        assert evaluate(sm, 0, bundle([0, 1, 2])) == 1

    def test_threshold_example(self):
        ts = ThresholdSubmodular([[4, 3, 2, 1]], (0, 0, 1, 1), 1)
        assert evaluate(ts, 0, full(4)) == 4

    def test_additive_sum(self):
        add = Additive([[1.5, 2.0, 0.25]])
        assert evaluate(add, 0, full(3)) == 3.75

    def test_out_of_range_bundle(self):
        with pytest.raises(MarketError):
            evaluate(Additive([[1.0, 2.0]]), 0, bundle([2]))
        with pytest.raises(MarketError):
            evaluate(Additive([[1.0, 2.0]]), 1, 1)

    def test_unit_demand_ties_rejected(self):
        with pytest.raises(MarketError):
            UnitDemand([[1.0, 1.0]])
        UnitDemand([[1.0, 1.0]], allow_ties=True)

    def test_empty_desired_set_rejected(self):
        with pytest.raises(MarketError):
            SingleMinded((0,), 2)

    @given(seeds, st.integers(1, 7))
    def test_batch_matches_scalar(self, seed, k):
        rng = np.random.default_rng(seed)
        v = rng.permutation(np.arange(1, 2 * k + 1, dtype=float)).reshape(2, k)
        slot_of = tuple(int(s) for s in rng.integers(0, 3, size=k))
        profiles = [
            UnitDemand(v), Additive(v), ThresholdSubmodular(v, slot_of, 2),
            SingleMinded((int(rng.integers(1, 1 << k)), int(rng.integers(1, 1 << k))), k),
        ]
        masks = mask_array(range(1 << k), k)
        for p in profiles:
            batch = p.values_of(masks)
            for mask in range(1 << k):
                for i in range(2):
                    assert batch[mask, i] == pytest.approx(evaluate(p, i, mask))

    @given(seeds, st.integers(1, 8))
    def test_threshold_matches_brute_force(self, seed, k):
        rng = np.random.default_rng(seed)
        v = rng.uniform(0, 5, size=(1, k))
        slot_of = tuple(int(s) for s in rng.integers(0, 3, size=k))
        th = int(rng.integers(1, 4))
        ts = ThresholdSubmodular(v, slot_of, th)
        for mask in range(1 << k):
            expect = brute_threshold_value(v[0], slot_of, th, members(mask))
            assert evaluate(ts, 0, mask) == pytest.approx(expect)

    @given(seeds, st.integers(1, 6))
    def test_singletons_equal_matrix_entries(self, seed, k):
        rng = np.random.default_rng(seed)
        v = rng.permutation(np.arange(1, k + 1, dtype=float))[None, :]
        for p in (UnitDemand(v), Additive(v), ThresholdSubmodular(v, tuple(range(k)), 1)):
            for g in range(k):
                assert evaluate(p, 0, 1 << g) == v[0, g]


class TestUnitDemandStructure:
    @given(seeds, st.integers(2, 6))
    def test_equal_values_survive_intersection(self, seed, k):
        rng = np.random.default_rng(seed)
        ud = UnitDemand(rng.permutation(k)[None, :].astype(float) + 1)
        for s, t in itertools.product(range(1, 1 << k), repeat=2):
            vs, vt = ud.value(0, s), ud.value(0, t)
            if vs == vt:
                assert ud.value(0, s & t) == vs
            if vs > vt:
                assert ud.value(0, s & ~t) == vs


class TestBudgetsAndMarkets:
    def test_strictly_decreasing(self):
        check_budgets([3, 2, 1])
        for bad in ([1, 2], [2, 2], [1, 0], [], [math.inf, 1]):
            with pytest.raises(MarketError):
                check_budgets(bad)

    def test_market_shape_mismatch(self):
        with pytest.raises(MarketError):
            MarketInstance([2, 1], Additive([[1.0, 2.0]]))

    def test_budget_normalized_flag(self):
        assert MarketInstance([2.0, 1.0], Additive([[2.0, 0.5], [0.1, 1.0]])).is_budget_normalized()
        assert not MarketInstance([2.0, 1.0], Additive([[1.0, 0.5], [0.1, 1.0]])).is_budget_normalized()

    def test_samples_check_against_truth(self):
        truth = Additive([[1.0, 2.0]])
        good = SampleSet([0b11], [[3.0]], 2)
        good.check_against(truth)
        with pytest.raises(MarketError):
            SampleSet([0b11], [[2.5]], 2).check_against(truth)

    def test_empty_sample_set(self):
        s = SampleSet([], np.zeros((0, 3)), 4)
        assert len(s) == 0 and s.n == 3 and s.union() == 0

    def test_sample_prefix_and_union(self):
        s = SampleSet([0b001, 0b110, 0b100], [[1], [2], [3]], 3)
        assert len(s.prefix(2)) == 2 and s.prefix(2).union() == 0b111

    def test_sample_rejects_goods_outside_market(self):
        with pytest.raises(MarketError):
            SampleSet([0b100], [[1.0]], 2)


class TestOutcome:
    def test_affordable_boundary(self):
        o = Outcome((0, 0), [1.0, 1.0])
        assert affordable(o, 0b11, 2.0)
        assert not affordable(o, 0b11, 1.999)

    def test_burnt_good_unaffordable(self):
        o = Outcome((0,), [1.0, BURN])
        assert not affordable(o, 0b10, 1e9)
        assert o.burnt == 0b10 and o.burnt_count == 1
        assert list(o.prices_of(mask_array([0b01, 0b10, 0b11], 2))) == [1.0, BURN, BURN]

    def test_example_prices(self):
        o = Outcome((0b001, 0b110), [2.0, 1.0, 0.0])
        assert affordable(o, 0b100, 1.0)

    def test_validate(self):
        assert validate_outcome(Outcome((0b01, 0b10), [0, 0]), 2) == []
        problems = validate_outcome(Outcome((0b01, 0b01), [0, 0]), 2)
        assert any("good 0 allocated twice" in p for p in problems)
        assert validate_outcome(Outcome((0b01,), [BURN, 0]), 2)
        assert validate_outcome(Outcome((0b100,), [0, 0]), 2)

    def test_negative_prices_rejected(self):
        with pytest.raises(MarketError):
            Outcome((0,), [-1.0])
