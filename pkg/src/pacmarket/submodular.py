"""Consistent allocations for monotone submodular markets.

Values of reduced bundles can only be underestimated here, so each player may
also fall back on a bundle known to be worth at least a floor ``c_i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .additive import _price_evenly, burn_until_consistent, strict_subsets
from .core import (
    MarketError,
    Outcome,
    SampleSet,
    as_scalar,
    check_budgets,
    full,
    mask_array,
    popcounts,
)


@dataclass(frozen=True)
class SubmodReduced:
    bundles: tuple
    values: np.ndarray
    fallbacks: tuple
    floors: np.ndarray
    k: int

    def __len__(self) -> int:
        return len(self.bundles)

    def masks(self) -> np.ndarray:
        return mask_array(self.bundles, self.k)


def _check_floors(c, n: int) -> np.ndarray:
    c = np.zeros(n) if c is None else np.array(c, dtype=float)
    if c.shape != (n,) or np.any(c < 0):
        raise MarketError(f"value floors must be {n} nonnegative numbers")
    return c


def fallback_bundles(samples: SampleSet, c: np.ndarray) -> tuple:
    """F_i: goods seen only in samples worth >= c_i to i, plus unsampled goods."""
    unseen = full(samples.k) & ~samples.union()
    out = []
    for i, ci in enumerate(c):
        v = samples.values[:, i] if len(samples) else np.zeros(0)
        hi = samples.bundles[v >= ci]
        lo = samples.bundles[v < ci]
        hi_mask = int(np.bitwise_or.reduce(hi)) if len(hi) else 0
        lo_mask = int(np.bitwise_or.reduce(lo)) if len(lo) else 0
        out.append((hi_mask & ~lo_mask) | unseen)
    return tuple(out)


def preprocess_submod(samples: SampleSet, c=None) -> SubmodReduced:
    """Strip every original sample that is a proper subset out of each bundle,
    subtracting its value (a valid underestimate for submodular truth).

    Subsets are taken smallest first, then by sample index; negative results
    clamp to 0.  Equal reduced bundles merge by elementwise max, and a reduced
    bundle that still strictly contains another is dropped.
    """
    k = samples.k
    n = samples.values.shape[1]
    c = _check_floors(c, n)
    orig = samples.bundles
    order = np.lexsort((np.arange(len(orig)), popcounts(orig))) if len(orig) else []

    merged: dict[int, np.ndarray] = {}
    for j in range(len(orig)):
        cur = int(orig[j])
        if not cur:
            continue
        val = samples.values[j].astype(float).copy()
        inside = strict_subsets(orig, cur, k) & (orig != as_scalar(0, orig))
        for s in order:
            if not inside[s]:
                continue
            sub = int(orig[s])
            if sub & ~cur == 0 and sub != cur:
                val -= samples.values[s]
                cur &= ~sub
        val = np.maximum(val, 0.0)
        merged[cur] = np.maximum(merged[cur], val) if cur in merged else val

    masks = list(merged)
    arr = mask_array(masks, k)
    keep = [m for m in masks if not strict_subsets(arr, m, k).any()]
    vals = np.array([merged[m] for m in keep]).reshape(len(keep), n)
    return SubmodReduced(tuple(keep), vals, fallback_bundles(samples, c), c, k)


def direct_submod(samples: SampleSet, budgets, c=None, trace: dict | None = None) -> Outcome:
    """Like the additive algorithm, but a player whose reduced bundles are all
    certified below ``c_i`` takes their fallback bundle instead (when it is
    still untouched).  ``c`` defaults to zeros.  Leftover goods go free to
    player 0.
    """
    b = check_budgets(budgets)
    n, k = len(b), samples.k
    red = preprocess_submod(samples, c)
    c = red.floors
    arr = red.masks()
    alive = np.ones(len(red), dtype=bool)

    allocation = [0] * n
    floor = np.zeros(n)
    prices = np.zeros(k)
    taken = 0
    for i in range(n):
        idxs = np.flatnonzero(alive)
        fb = red.fallbacks[i]
        if fb and not fb & taken and np.all(red.values[idxs, i] < c[i]):
            chosen, floor[i] = fb, c[i]
        elif len(idxs):
            j = int(idxs[np.argmax(red.values[idxs, i])])
            chosen, floor[i] = red.bundles[j], red.values[j, i]
        else:
            continue
        allocation[i] = chosen
        taken |= chosen
        _price_evenly(prices, chosen, b[i])
        alive &= (arr & as_scalar(chosen, arr)) == 0
    if trace is not None:
        trace["initial"] = list(allocation)

    burn_until_consistent(samples, b, allocation, prices, floor)

    held = 0
    for a in allocation:
        held |= a
    burnt = 0
    for g in np.flatnonzero(np.isinf(prices)):
        burnt |= 1 << int(g)
    allocation[0] |= full(k) & ~(held | burnt)
    return Outcome(allocation, prices, values=floor.tolist())
