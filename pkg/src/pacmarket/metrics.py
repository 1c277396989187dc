"""Loss, welfare and equilibrium checks for market outcomes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MarketError,
    MarketInstance,
    Outcome,
    SampleSet,
    ValuationProfile,
    bundle_prices,
    check_budgets,
    evaluate,
    mask_array,
    membership,
)
from .distributions import DistributionSpec, sample_bundles

#: largest k for which ``is_walrasian`` will enumerate every bundle
WALRAS_MAX_K = 22


@dataclass(frozen=True)
class LossReport:
    empirical: float
    violating: list = field(default_factory=list)
    m: int = 0

    @property
    def zero(self) -> bool:
        return not self.violating


def _own_values(outcome: Outcome, truth: ValuationProfile | None) -> np.ndarray:
    if truth is not None:
        return np.array([evaluate(truth, i, a) for i, a in enumerate(outcome.allocation)])
    if outcome.values is None:
        raise MarketError("outcome carries no certified values; pass the true valuations")
    return np.array(outcome.values)


def _violations(outcome: Outcome, masks: np.ndarray, vals: np.ndarray, own: np.ndarray,
                budgets: np.ndarray) -> np.ndarray:
    cost = bundle_prices(membership(masks, outcome.k), outcome.prices)
    return (vals > own[None, :]) & (cost[:, None] <= budgets[None, :])


def loss_indicator(outcome: Outcome, mask: int, truth: ValuationProfile, budgets) -> int:
    """1 if some player strictly prefers ``mask`` to their bundle and can pay for it."""
    b = check_budgets(budgets)
    own = _own_values(outcome, truth)
    arr = mask_array([mask], outcome.k)
    vals = truth.values_of(arr)
    return int(_violations(outcome, arr, vals, own, b).any())


def empirical_loss(outcome: Outcome, samples: SampleSet, truth: ValuationProfile | None,
                   budgets) -> LossReport:
    """Fraction of ``samples`` that some player both prefers and affords.

    Sample values come from the records.  A player's own value comes from
    ``truth`` when given, otherwise from the certified ``outcome.values``.
    """
    if len(samples) == 0:
        raise MarketError("empirical loss needs at least one sample")
    b = check_budgets(budgets)
    own = _own_values(outcome, truth)
    viol = _violations(outcome, samples.bundles, samples.values, own, b)
    rows, players = np.nonzero(viol)
    pairs = [(int(i), int(j)) for j, i in zip(rows, players)]
    bad = int(viol.any(axis=1).sum())
    return LossReport(bad / len(samples), sorted(pairs, key=lambda p: (p[1], p[0])), len(samples))


def wilson_interval(hits: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials < 1:
        raise MarketError("need at least one trial")
    p = hits / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def count_losses(outcome: Outcome, market: MarketInstance, spec: DistributionSpec,
                 trials: int, rng: np.random.Generator, chunk: int = 4096) -> int:
    if trials < 1:
        raise MarketError("need at least one trial")
    own = _own_values(outcome, market.valuations)
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        masks = sample_bundles(spec, rng, m)
        vals = market.valuations.values_of(masks)
        hits += int(_violations(outcome, masks, vals, own, market.budgets).any(axis=1).sum())
        done += m
    return hits


def estimate_expected_loss(outcome: Outcome, market: MarketInstance, spec: DistributionSpec,
                           trials: int, rng: np.random.Generator) -> float:
    """Monte Carlo loss over ``trials`` fresh draws from ``spec``."""
    return count_losses(outcome, market, spec, trials, rng) / trials


def welfare(allocation, truth: ValuationProfile) -> float:
    return float(sum(evaluate(truth, i, a) for i, a in enumerate(allocation)))


def efficiency_ratio(allocation, truth: ValuationProfile, optimal_allocation) -> float:
    best = welfare(optimal_allocation, truth)
    if best <= 0:
        raise MarketError("efficiency ratio undefined: optimal welfare is zero")
    return welfare(allocation, truth) / best


def is_envy_free(outcome: Outcome, truth: ValuationProfile, budgets) -> bool:
    b = check_budgets(budgets)
    alloc = outcome.allocation
    for i in range(len(alloc)):
        mine = evaluate(truth, i, alloc[i])
        for j, other in enumerate(alloc):
            if j != i and outcome.price_of(other) <= b[i] and evaluate(truth, i, other) > mine:
                return False
    return True


def subset_prices(prices: np.ndarray) -> np.ndarray:
    """Price of every bundle of a k-good market, indexed by mask."""
    k = len(prices)
    table = np.zeros(1 << k)
    for g in range(k):
        lo = 1 << g
        table[lo: 2 * lo] = table[:lo] + prices[g]
    return table


def is_walrasian(outcome: Outcome, market: MarketInstance, chunk: int = 1 << 16) -> bool:
    """Every player affords their bundle and no affordable bundle is worth more."""
    k, n = market.k, market.n
    if k > WALRAS_MAX_K:
        raise MarketError(f"is_walrasian enumerates 2^k bundles; k={k} exceeds {WALRAS_MAX_K}")
    b = market.budgets
    truth = market.valuations
    cost = subset_prices(np.asarray(outcome.prices))
    own = np.array([evaluate(truth, i, a) for i, a in enumerate(outcome.allocation)])
    if np.any(cost[list(outcome.allocation)] > b):
        return False
    for start in range(0, 1 << k, chunk):
        stop = min(start + chunk, 1 << k)
        masks = np.arange(start, stop, dtype=np.uint64)
        vals = truth.values_of(masks)
        if ((vals > own[None, :]) & (cost[start:stop, None] <= b[None, :])).any():
            return False
    return True


def sample_complexity(k: int, eps: float, delta: float, C: float = 1.0) -> int:
    """Samples sufficient for an eps-PAC outcome with confidence 1 - delta."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise MarketError("eps and delta must lie in (0, 1)")
    if C <= 0 or k < 0:
        raise MarketError("need C > 0 and k >= 0")
    return math.ceil((C / eps) * (k * math.log(1 / eps) + math.log(1 / delta)))
