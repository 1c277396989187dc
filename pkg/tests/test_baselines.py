import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pacmarket import baselines
from pacmarket.baselines import (
    divisible_additive_equilibrium,
    opt_welfare_additive,
    opt_welfare_bruteforce,
    optimal_sm_welfare_equilibrium,
    optimal_ud_equilibrium,
)
from pacmarket.core import (
    Additive,
    MarketError,
    MarketInstance,
    Outcome,
    ResourceLimitError,
    SingleMinded,
    UnitDemand,
    full,
)
from pacmarket.metrics import is_walrasian, welfare

from conftest import budgets, random_market, seeds


def all_allocations(n, k):
    for owner in itertools.product(range(-1, n), repeat=k):
        yield tuple(sum(1 << g for g in range(k) if owner[g] == i) for i in range(n))


def exhaustive_opt(market):
    return max(welfare(a, market.valuations) for a in all_allocations(market.n, market.k))


def distinct_ud(n, k, rng):
    b = budgets(n, rng)
    return MarketInstance(b, UnitDemand(np.stack([rng.permutation(k) + 1.0 for _ in range(n)])))


class TestUnitDemandEquilibrium:
    def test_single_player(self):
        market = MarketInstance([1.0], UnitDemand([[0.2, 0.9, 0.5]]))
        o = optimal_ud_equilibrium(market)
        assert o.allocation[0] & 0b010 and o.prices[1] == 1.0

    def test_identical_orders(self):
        market = MarketInstance([3.0, 2.0, 1.0], UnitDemand([[3.0, 2.0, 1.0]] * 3))
        o = optimal_ud_equilibrium(market)
        assert o.allocation == (0b001, 0b010, 0b100)
        assert list(o.prices) == [3.0, 2.0, 1.0]

    def test_ties_rejected(self):
        market = MarketInstance([1.0], UnitDemand([[1.0, 1.0]], allow_ties=True))
        with pytest.raises(MarketError):
            optimal_ud_equilibrium(market)

    @given(seeds, st.integers(1, 3), st.integers(1, 3))
    def test_best_equilibrium_by_enumeration(self, seed, n, k):
        rng = np.random.default_rng(seed)
        market = distinct_ud(n, k, rng)
        o = optimal_ud_equilibrium(market)
        assert is_walrasian(o, market)
        # any equilibrium with one good per player uses prices drawn from the budgets
        levels = [0.0] + list(market.budgets)
        best = 0.0
        for alloc in all_allocations(n, k):
            for prices in itertools.product(levels, repeat=k):
                cand = Outcome(alloc, prices)
                if is_walrasian(cand, market):
                    best = max(best, welfare(alloc, market.valuations))
        assert welfare(o.allocation, market.valuations) == pytest.approx(best)


class TestWelfareOptimum:
    def test_single_additive_player(self):
        market = MarketInstance([1.0], Additive([[1.0, 2.0]]))
        assert opt_welfare_additive(market) == (0b11,)

    def test_cross_preferences(self):
        market = MarketInstance([2.0, 1.0], Additive([[1.0, 0.1], [0.1, 1.0]]))
        assert opt_welfare_additive(market) == (0b01, 0b10)

    @given(seeds, st.integers(1, 3), st.integers(1, 4),
           st.sampled_from(["additive", "unit-demand", "submodular", "single-minded"]))
    def test_matches_exhaustive(self, seed, n, k, family):
        rng = np.random.default_rng(seed)
        market = random_market(family, n, k, rng)
        best = exhaustive_opt(market)
        for method in ("auto", "search"):
            alloc = opt_welfare_bruteforce(market, method=method)
            assert welfare(alloc, market.valuations) == pytest.approx(best)

    @given(seeds, st.integers(1, 4), st.integers(1, 7))
    def test_value_table_matches_direct_evaluation(self, seed, n, k):
        market = random_market("submodular", n, k, np.random.default_rng(seed))
        tabled = welfare(opt_welfare_bruteforce(market, method="search"), market.valuations)
        old = baselines.TABLE_MAX_K
        baselines.TABLE_MAX_K = -1
        try:
            direct = welfare(opt_welfare_bruteforce(market, method="search"), market.valuations)
        finally:
            baselines.TABLE_MAX_K = old
        assert tabled == pytest.approx(direct)

    def test_single_player_gets_everything(self):
        market = MarketInstance([1.0], Additive([[1.0, 2.0, 3.0]]))
        assert opt_welfare_bruteforce(market, method="search") == (full(3),)

    def test_limit(self, rng):
        market = random_market("submodular", 6, 12, rng)
        with pytest.raises(ResourceLimitError):
            opt_welfare_bruteforce(market, limit=5, method="search")

    def test_unknown_method(self, rng):
        with pytest.raises(MarketError):
            opt_welfare_bruteforce(random_market("additive", 2, 2, rng), method="magic")


class TestSingleMindedEquilibrium:
    def test_disjoint(self):
        market = MarketInstance([3.0, 2.0, 1.0], SingleMinded((0b001, 0b010, 0b100), 3))
        o = optimal_sm_welfare_equilibrium(market)
        assert welfare(o.allocation, market.valuations) == 3

    def test_shared_good(self):
        market = MarketInstance([3.0, 2.0, 1.0], SingleMinded((0b1,) * 3, 1))
        o = optimal_sm_welfare_equilibrium(market)
        assert welfare(o.allocation, market.valuations) == 1
        assert is_walrasian(o, market)

    def test_equilibrium_can_beat_greedy_packing_order(self):
        # player 0 wants both goods; the best equilibrium lets 1 and 2 win
        market = MarketInstance([1.0, 0.9, 0.8], SingleMinded((0b11, 0b01, 0b10), 2))
        o = optimal_sm_welfare_equilibrium(market)
        assert welfare(o.allocation, market.valuations) == 2
        assert is_walrasian(o, market)

    @given(seeds, st.integers(1, 5), st.integers(1, 5))
    def test_is_walrasian_and_maximal(self, seed, n, k):
        rng = np.random.default_rng(seed)
        market = random_market("single-minded", n, k, rng)
        o = optimal_sm_welfare_equilibrium(market)
        assert is_walrasian(o, market)
        w = welfare(o.allocation, market.valuations)
        packing = welfare(opt_welfare_bruteforce(market), market.valuations)
        assert 1 <= w <= packing

    def test_small_cases_against_price_grid(self):
        # with n, k <= 3, equilibria at grid prices bound the LP answer from below
        for seed in range(12):
            rng = np.random.default_rng(seed)
            market = random_market("single-minded", 3, 3, rng)
            o = optimal_sm_welfare_equilibrium(market)
            grid = np.linspace(0, 2.0, 6)
            best = 0
            for prices in itertools.product(grid, repeat=3):
                for alloc in all_allocations(3, 3):
                    cand = Outcome(alloc, prices)
                    w = welfare(alloc, market.valuations)
                    if w > best and is_walrasian(cand, market):
                        best = w
            assert welfare(o.allocation, market.valuations) >= best

    def test_wrong_family(self, rng):
        with pytest.raises(MarketError):
            optimal_sm_welfare_equilibrium(random_market("additive", 2, 2, rng))


class TestDivisible:
    def test_single_player(self):
        market = MarketInstance([2.0], Additive([[1.0, 3.0]]))
        fa = divisible_additive_equilibrium(market)
        assert np.allclose(fa.shares, 1.0)
        assert fa.prices.sum() == pytest.approx(2.0)

    def test_symmetric_pair(self):
        market = MarketInstance([1.0 + 1e-6, 1.0], Additive([[1.0, 1.0], [1.0, 1.0]]))
        fa = divisible_additive_equilibrium(market)
        assert np.allclose(fa.shares, 0.5, atol=1e-3)

    @given(seeds, st.integers(1, 8), st.integers(1, 8))
    def test_budgets_clear(self, seed, n, k):
        rng = np.random.default_rng(seed)
        market = random_market("additive", n, k, rng)
        fa = divisible_additive_equilibrium(market)
        assert fa.prices.sum() == pytest.approx(market.budgets.sum(), rel=1e-9)
        assert np.allclose(fa.spending(), market.budgets)
        assert np.allclose(fa.shares.sum(axis=0), 1.0)

    def test_dual_rescues_short_runs(self, rng):
        market = random_market("additive", 5, 5, rng)
        fa = divisible_additive_equilibrium(market, iterations=2, tolerance=0.0)
        assert fa.exact
        assert np.allclose(fa.spending(), market.budgets, rtol=1e-10)

    def test_non_convergence(self, rng, monkeypatch):
        monkeypatch.setattr(baselines, "_try_polish", lambda *args: None)
        market = random_market("additive", 5, 5, rng)
        with pytest.raises(ResourceLimitError):
            divisible_additive_equilibrium(market, iterations=2, tolerance=0.0)

    def test_unwanted_good_is_free(self):
        market = MarketInstance([2.0, 1.0], Additive([[1.0, 0.0, 2.0], [3.0, 0.0, 1.0]]))
        fa = divisible_additive_equilibrium(market)
        assert fa.prices[1] == 0 and not fa.shares[:, 1].any()
        assert fa.prices.sum() == pytest.approx(3.0)

    def test_zero_row_rejected(self):
        market = MarketInstance([2.0, 1.0], Additive([[1.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(MarketError):
            divisible_additive_equilibrium(market)
