import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from pacmarket.core import (
    Additive,
    MarketInstance,
    SingleMinded,
    ThresholdSubmodular,
    UnitDemand,
)
from pacmarket.distributions import FixedSize, Product, UniformPowerSet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def budgets(n, rng, normalized_low=1.0):
    while True:
        b = np.sort(rng.uniform(normalized_low, normalized_low + 1.0, size=n))[::-1]
        if np.all(np.diff(b) < 0):
            return b


def normalize(v, b):
    """Scale each row so its largest entry equals the budget exactly."""
    top = v.argmax(axis=1)
    v = v * (b / v[np.arange(len(b)), top])[:, None]
    v[np.arange(len(b)), top] = b
    return v


def random_market(family, n, k, rng, normalized=True, threshold=None, slots=None):
    b = budgets(n, rng)
    if family == "single-minded":
        desired = []
        for _ in range(n):
            s = int(rng.integers(1, min(3, k) + 1))
            desired.append(sum(1 << int(g) for g in rng.choice(k, size=s, replace=False)))
        return MarketInstance(b, SingleMinded(tuple(desired), k))
    v = rng.uniform(0.05, 1.0, size=(n, k))
    if normalized:
        v = normalize(v, b)
    if family == "unit-demand":
        return MarketInstance(b, UnitDemand(v))
    if family == "additive":
        return MarketInstance(b, Additive(v))
    slots = slots or int(rng.integers(1, k + 1))
    slot_of = tuple(int(s) for s in rng.integers(0, slots, size=k))
    threshold = threshold or int(rng.integers(1, 4))
    return MarketInstance(b, ThresholdSubmodular(v, slot_of, threshold))


def random_spec(k, rng):
    kind = int(rng.integers(3))
    if kind == 0:
        return Product(tuple(rng.uniform(0.1, 0.9, size=k)))
    if kind == 1:
        return FixedSize(int(rng.integers(1, k + 1)), k)
    return UniformPowerSet(k)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def example_one():
    """Two players, three goods; the samples are {0,1} and {2}."""
    from pacmarket.core import SampleSet

    market = MarketInstance([2.0, 1.0], UnitDemand([[0.0, 5.0, 3.0], [4.0, 1.0, 2.0]]))
    samples = SampleSet.from_market(market, [0b011, 0b100])
    return market, samples
