"""Single-minded markets: learn desired sets, then price contested goods."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MarketError, Outcome, SampleSet, check_budgets, full, members

# relative tolerance when testing two remaining budgets for equality
BUDGET_TIE_RTOL = 1e-12

LEFTOVER_RULES = ("last", "first", "none")


@dataclass(frozen=True)
class DesiredSets:
    sets: tuple
    k: int

    n = property(lambda self: len(self.sets))


def learn_desired_sets(samples: SampleSet, n: int | None = None) -> DesiredSets:
    """Intersect every positively valued sample per player (all goods if none).

    The learned set always contains the true desired set, so the learned
    valuation never overstates the truth.
    """
    n = samples.n if n is None else n
    vals = samples.values
    if len(samples) and not np.all((vals == 0) | (vals == 1)):
        raise MarketError("single-minded sample values must be 0 or 1")
    sets = []
    for i in range(n):
        pos = samples.bundles[vals[:, i] > 0] if len(samples) else samples.bundles
        sets.append(int(np.bitwise_and.reduce(pos)) if len(pos) else full(samples.k))
    return DesiredSets(tuple(sets), samples.k)


def _tied(x: float, y: float) -> bool:
    return x == y or abs(x - y) <= BUDGET_TIE_RTOL * max(abs(x), abs(y))


def sm_equilibrium(desired: DesiredSets, budgets, leftovers: str = "last") -> Outcome:
    """Walrasian equilibrium for single-minded players with distinct budgets.

    Goods are visited in index order.  A good wanted by one active player is
    given away; a contested good goes to the richest remaining demander at a
    price just above the runner-up's remaining budget, nudged further so no
    two remaining budgets coincide.  After each sale any player who can no
    longer pay for the unpurchased rest of their set drops out.

    Goods nobody ends up buying go free to the last player by default;
    ``leftovers="first"`` gives them to player 0 and ``"none"`` keeps them
    unallocated.
    """
    b = check_budgets(budgets)
    n, k = len(b), desired.k
    if desired.n != n:
        raise MarketError(f"{desired.n} desired sets for {n} budgets")
    if leftovers not in LEFTOVER_RULES:
        raise MarketError(f"leftovers must be one of {LEFTOVER_RULES}")

    remaining = b.copy()
    prices = np.zeros(k)
    demand = list(desired.sets)
    allocation = [0] * n

    for g in range(k):
        bit = 1 << g
        wanting = [i for i in range(n) if demand[i] & bit]
        if len(wanting) == 1:
            allocation[wanting[0]] |= bit
            continue
        if not wanting:
            continue

        # richest active demander wins; runner-up sets the price
        s = max(wanting, key=lambda i: remaining[i])
        t = max((i for i in wanting if i != s), key=lambda i: remaining[i])
        step = (remaining[s] - remaining[t]) / n**2
        price = remaining[t] + step
        remaining[s] -= price
        while any(_tied(remaining[i], remaining[s]) for i in range(n) if i != s):
            remaining[s] -= step
            price += step
        prices[g] = price
        allocation[s] |= bit

        for i in range(n):
            if demand[i]:
                unpaid = demand[i] & ~allocation[i]
                if prices[members(unpaid)].sum() > remaining[i]:
                    demand[i] = 0

    taken = 0
    for a in allocation:
        taken |= a
    if leftovers != "none":
        allocation[n - 1 if leftovers == "last" else 0] |= full(k) & ~taken
    certified = [1.0 if a & d == d else 0.0 for a, d in zip(allocation, desired.sets)]
    return Outcome(allocation, prices, values=certified)


def sm_pipeline(samples: SampleSet, budgets, leftovers: str = "last") -> Outcome:
    """Learn desired sets from ``samples`` and compute their equilibrium."""
    b = check_budgets(budgets)
    return sm_equilibrium(learn_desired_sets(samples, len(b)), b, leftovers)
