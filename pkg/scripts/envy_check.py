"""Count envious outcomes of the single-minded pipeline under each leftover rule.

Goods nobody won are free; whoever receives them can become envied by a
player who wanted exactly those goods but was priced out elsewhere.
"""
import sys

import numpy as np

from pacmarket import MarketInstance, SingleMinded, is_envy_free, make_sample_set, sm_pipeline
from pacmarket.distributions import UniformPowerSet
from pacmarket.single_minded import LEFTOVER_RULES


def random_instance(rng):
    n, k = int(rng.integers(1, 11)), int(rng.integers(1, 13))
    b = np.sort(rng.uniform(1.0, 2.0, size=n))[::-1]
    desired = tuple(sum(1 << int(g) for g in rng.choice(k, size=int(rng.integers(1, min(3, k) + 1)),
                                                        replace=False)) for _ in range(n))
    market = MarketInstance(b, SingleMinded(desired, k))
    return market, make_sample_set(market, UniformPowerSet(k), int(rng.integers(1, 31)), rng)


def main(trials=2000, seed=0):
    for rule in LEFTOVER_RULES:
        rng = np.random.default_rng(seed)
        envious = 0
        for _ in range(trials):
            market, s = random_instance(rng)
            o = sm_pipeline(s, market.budgets, leftovers=rule)
            envious += not is_envy_free(o, market.valuations, market.budgets)
        print(f"leftovers={rule:5s} envious outcomes: {envious}/{trials}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
