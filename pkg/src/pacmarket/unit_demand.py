"""Unit-demand markets: learn-then-allocate versus learning the outcome directly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Outcome,
    SampleSet,
    as_scalar,
    check_budgets,
    full,
    members,
    membership,
)

#: Estimate for a good that appears in no sample.
UNSEEN = np.inf


@dataclass(frozen=True)
class UnitDemandEstimate:
    """``est[i, g]``: smallest observed value of any sample containing g.

    Overestimates v_i({g}); ``UNSEEN`` where g was never sampled.
    """

    est: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return np.isfinite(self.est[0]) if len(self.est) else np.zeros(0, bool)


def learn_ud_estimate(samples: SampleSet, n: int | None = None) -> UnitDemandEstimate:
    n = samples.n if n is None else n
    if len(samples) == 0:
        return UnitDemandEstimate(np.full((n, samples.k), UNSEEN))
    mem = membership(samples.bundles, samples.k)
    est = np.where(mem[:, None, :], samples.values[:, :, None], UNSEEN).min(axis=0)
    return UnitDemandEstimate(est)


def _or_all(masks: np.ndarray) -> int:
    return int(np.bitwise_or.reduce(masks)) if len(masks) else 0


def _and_all(masks: np.ndarray) -> int:
    return int(np.bitwise_and.reduce(masks)) if len(masks) else 0


def indirect_ud(samples: SampleSet, budgets, rng: np.random.Generator | None = None) -> Outcome:
    """Estimate singleton values, then serial dictatorship on the estimates.

    Players pick in budget order and pay their whole budget.  Sampled goods are
    handed out first; once they run out, unsampled goods follow in index order.
    Ties in the estimate go to the lowest index, or uniformly at random when
    ``rng`` is given.  Leftovers go to the last player for free.
    """
    b = check_budgets(budgets)
    n, k = len(b), samples.k
    est = learn_ud_estimate(samples, n).est
    observed = samples.union()
    pool = members(observed)
    unseen = members(full(k) & ~observed)
    switched = False
    if not pool:
        pool, switched = unseen, True

    allocation = [0] * n
    prices = np.zeros(k)
    for i in range(n):
        if not pool:
            break
        if switched:
            g = pool[0]
        else:
            scores = est[i, pool]
            best = np.flatnonzero(scores == scores.max())
            pick = best[0] if rng is None else rng.choice(best)
            g = pool[int(pick)]
        allocation[i] |= 1 << g
        prices[g] = b[i]
        pool = [x for x in pool if x != g]
        if not pool and not switched:
            pool, switched = unseen, True

    taken = 0
    for a in allocation:
        taken |= a
    allocation[n - 1] |= full(k) & ~taken
    return Outcome(allocation, prices)


def direct_ud(samples: SampleSet, budgets) -> Outcome:
    """Allocate each player, in budget order, the smallest bundle that surely
    holds their best still-available good.

    For player i the best remaining samples (all sharing the top value c) are
    intersected, and every good seen in a sample worth less than c is removed.
    If that core touches an earlier allocation (or is empty) those samples are
    discarded and the next value level is tried.  The core is priced so it
    costs exactly b_i.  Unsampled goods go free to player 0, leftovers free
    to the last player.
    """
    b = check_budgets(budgets)
    n, k = len(b), samples.k
    masks, vals = samples.bundles, samples.values
    observed = samples.union()

    allocation = [0] * n
    certified = [0.0] * n
    prices = np.zeros(k)
    allocation[0] = full(k) & ~observed
    taken = 0

    for i in range(n):
        v = vals[:, i] if len(masks) else np.zeros(0)
        active = np.ones(len(masks), dtype=bool)
        while active.any():
            c = v[active].max()
            level = active & (v == c)
            core = _and_all(masks[level]) & ~_or_all(masks[v < c])
            if core == 0 or core & taken:
                active &= ~level
                continue
            goods = members(core)
            prices[goods] = b[i] / len(goods)
            allocation[i] |= core
            certified[i] = float(c)
            taken |= core
            break

    allocation[n - 1] |= observed & ~taken
    return Outcome(allocation, prices, values=certified)
