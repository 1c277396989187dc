"""Consistent allocations for additive markets, enforced by burning goods."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BURN,
    Outcome,
    SampleSet,
    as_scalar,
    bundle_prices,
    check_budgets,
    full,
    lowest,
    mask_array,
    members,
    membership,
)


@dataclass(frozen=True)
class ReducedSamples:
    """Subset-free bundles with derived per-player values (``values[j, i]``)."""

    bundles: tuple
    values: np.ndarray
    k: int

    def __len__(self) -> int:
        return len(self.bundles)

    def masks(self) -> np.ndarray:
        return mask_array(self.bundles, self.k)


def strict_subsets(arr: np.ndarray, mask: int, k: int) -> np.ndarray:
    """Boolean index of the entries of ``arr`` that are proper subsets of ``mask``."""
    outside = as_scalar(full(k) & ~mask, arr)
    return ((arr & outside) == 0) & (arr != as_scalar(mask, arr))


def preprocess_additive(samples: SampleSet) -> ReducedSamples:
    """Replace any bundle that strictly contains another by the difference,
    subtracting values, until no bundle contains another.

    Exact under additive valuations.  Empty bundles are dropped and equal
    bundles merged (the first one seen is kept).
    """
    k = samples.k
    bundles: list[int] = []
    values: list[np.ndarray] = []
    index: dict[int, int] = {}
    for mask, vals in samples.records():
        if mask and mask not in index:
            index[mask] = len(bundles)
            bundles.append(mask)
            values.append(vals.astype(float).copy())

    arr = mask_array(bundles, k)
    alive = np.ones(len(bundles), dtype=bool)
    changed = True
    while changed:
        changed = False
        for idx in range(len(bundles)):
            while alive[idx]:
                subs = np.flatnonzero(strict_subsets(arr, bundles[idx], k) & alive)
                if not len(subs):
                    break
                j = int(subs[0])
                del index[bundles[idx]]
                bundles[idx] &= ~bundles[j]
                values[idx] = values[idx] - values[j]
                changed = True
                if bundles[idx] in index:
                    alive[idx] = False
                    arr[idx] = as_scalar(0, arr)
                else:
                    index[bundles[idx]] = idx
                    arr[idx] = as_scalar(bundles[idx], arr)

    keep = np.flatnonzero(alive)
    n = samples.values.shape[1]
    vals = np.array([values[j] for j in keep]).reshape(len(keep), n)
    return ReducedSamples(tuple(bundles[j] for j in keep), vals, k)


def _price_evenly(prices: np.ndarray, mask: int, budget: float) -> None:
    goods = members(mask)
    if goods:
        prices[goods] = budget / len(goods)


def burn_until_consistent(samples: SampleSet, budgets: np.ndarray, allocation: list,
                          prices: np.ndarray, floor: np.ndarray) -> None:
    """Burn goods until no player both affords and strictly prefers (relative
    to ``floor``, their certified value) some original sample.

    Mutates ``allocation``, ``prices`` and ``floor`` in place.  A free good in
    the offending sample is burnt first; otherwise the lowest-budget owner
    inside the sample loses one good and their value floor drops to 0.
    """
    if len(samples) == 0:
        return
    n = len(budgets)
    mem = membership(samples.bundles, samples.k)
    vals = samples.values
    while True:
        cost = bundle_prices(mem, prices)
        wants = (vals > floor[None, :]) & (cost[:, None] <= budgets[None, :])
        if not wants.any():
            return
        i = int(np.flatnonzero(wants.any(axis=0))[0])
        s = int(samples.bundles[int(np.flatnonzero(wants[:, i])[0])])
        held = 0
        for a in allocation:
            held |= a
        free = s & ~held
        if free:
            prices[lowest(free)] = BURN
            continue
        owner = max(p for p in range(n) if allocation[p] & s)
        g = lowest(allocation[owner] & s)
        prices[g] = BURN
        allocation[owner] &= ~(1 << g)
        _price_evenly(prices, allocation[owner], budgets[owner])
        floor[owner] = 0.0


def direct_additive(samples: SampleSet, budgets, trace: dict | None = None) -> Outcome:
    """Greedy allocation of reduced samples, then burning to restore consistency.

    Each player in budget order takes their favourite reduced bundle that is
    still disjoint from everything handed out, at a total price of their
    budget.  Burning then removes every affordable, strictly preferred
    original sample.  Surviving untouched reduced bundles go free to whoever
    values them most; any remaining goods go free to player 0.

    ``trace`` (optional dict) receives the phase-1 bundles under ``"initial"``.
    """
    b = check_budgets(budgets)
    n, k = len(b), samples.k
    red = preprocess_additive(samples)
    arr = red.masks()
    alive = np.ones(len(red), dtype=bool)

    allocation = [0] * n
    floor = np.zeros(n)
    prices = np.zeros(k)
    for i in range(n):
        idxs = np.flatnonzero(alive)
        if not len(idxs):
            break
        j = int(idxs[np.argmax(red.values[idxs, i])])
        chosen = red.bundles[j]
        allocation[i] = chosen
        floor[i] = red.values[j, i]
        _price_evenly(prices, chosen, b[i])
        alive &= (arr & as_scalar(chosen, arr)) == 0
    if trace is not None:
        trace["initial"] = list(allocation)

    burn_until_consistent(samples, b, allocation, prices, floor)

    burnt = 0
    for g in np.flatnonzero(np.isinf(prices)):
        burnt |= 1 << int(g)
    for j in np.flatnonzero(alive):
        held = 0
        for a in allocation:
            held |= a
        s = red.bundles[j]
        if s & (held | burnt):
            continue
        i = int(np.argmax(red.values[j]))
        allocation[i] |= s
        floor[i] += max(red.values[j, i], 0.0)

    held = 0
    for a in allocation:
        held |= a
    allocation[0] |= full(k) & ~(held | burnt)
    return Outcome(allocation, prices, values=floor.tolist())
