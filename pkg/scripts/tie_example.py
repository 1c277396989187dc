"""Two players, three goods, two possible samples.

Learning singleton values first ties goods 0 and 1 for the richer player, and
the lowest-index tie-break hands them a good they do not value.  Learning the
allocation directly avoids that.
"""
import numpy as np

from pacmarket import (
    Explicit,
    MarketInstance,
    SampleSet,
    UnitDemand,
    direct_ud,
    empirical_loss,
    estimate_expected_loss,
    indirect_ud,
    members,
)


def main():
    market = MarketInstance([2.0, 1.0], UnitDemand([[0.0, 5.0, 3.0], [4.0, 1.0, 2.0]]))
    samples = SampleSet.from_market(market, [0b011, 0b100])
    spec = Explicit((0b011, 0b100), (0.5, 0.5), 3)
    rng = np.random.default_rng(0)

    for name, algo in (("indirect", indirect_ud), ("direct", direct_ud)):
        o = algo(samples, market.budgets)
        train = empirical_loss(o, samples, market.valuations, market.budgets).empirical
        test = estimate_expected_loss(o, market, spec, 10_000, rng)
        bundles = [members(a) for a in o.allocation]
        print(f"{name:9s} bundles={bundles} prices={o.prices.tolist()} "
              f"train loss={train:.2f} expected loss={test:.3f}")


if __name__ == "__main__":
    main()
