"""Bundle distributions and worst-case instance generators."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import (
    Additive,
    MarketError,
    MarketInstance,
    SampleSet,
    SingleMinded,
    UnitDemand,
    bundle,
    full,
    mask_array,
    members,
)


@dataclass(frozen=True)
class Product:
    """Each good g is included independently with probability ``p[g]``."""

    p: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if any(not 0.0 <= x <= 1.0 for x in p):
            raise MarketError("product probabilities must lie in [0, 1]")
        object.__setattr__(self, "p", p)

    k = property(lambda self: len(self.p))

    @classmethod
    def uniform(cls, k: int, p: float = 0.5) -> "Product":
        return cls((p,) * k)


@dataclass(frozen=True)
class FixedSize:
    """Uniform over all bundles with exactly ``s`` goods."""

    s: int
    k: int

    def __post_init__(self):
        if not 1 <= self.s <= self.k:
            raise MarketError(f"fixed bundle size {self.s} not in [1, {self.k}]")


@dataclass(frozen=True)
class UniformPowerSet:
    k: int


@dataclass(frozen=True)
class Explicit:
    bundles: tuple
    weights: tuple
    k: int

    def __post_init__(self):
        bundles = tuple(int(b) for b in self.bundles)
        weights = tuple(float(w) for w in self.weights)
        if len(bundles) != len(weights) or not bundles:
            raise MarketError("explicit distribution needs one weight per bundle")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise MarketError("explicit weights must be nonnegative and sum to 1")
        if any(b >> self.k for b in bundles):
            raise MarketError("explicit bundle has goods outside the market")
        object.__setattr__(self, "bundles", bundles)
        object.__setattr__(self, "weights", weights)


DistributionSpec = Union[Product, FixedSize, UniformPowerSet, Explicit]


def inclusion_probabilities(spec: DistributionSpec) -> np.ndarray:
    if isinstance(spec, Product):
        return np.array(spec.p)
    if isinstance(spec, UniformPowerSet):
        return np.full(spec.k, 0.5)
    if isinstance(spec, FixedSize):
        return np.full(spec.k, spec.s / spec.k)
    probs = np.zeros(spec.k)
    for b, w in zip(spec.bundles, spec.weights):
        for g in range(spec.k):
            if b >> g & 1:
                probs[g] += w
    return probs


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _pack(rows: np.ndarray) -> np.ndarray:
    """Pack a boolean (m, k) matrix into a mask array."""
    m, k = rows.shape
    if k <= 64:
        weights = np.left_shift(np.uint64(1), np.arange(k, dtype=np.uint64))
        return (rows.astype(np.uint64) * weights[None, :]).sum(axis=1, dtype=np.uint64)
    return mask_array((bundle(np.flatnonzero(r)) for r in rows), k)


def _floyd(s: int, k: int, rng: np.random.Generator) -> int:
    chosen = 0
    for j in range(k - s, k):
        t = int(rng.integers(0, j + 1))
        chosen |= (1 << j) if chosen >> t & 1 else (1 << t)
    return chosen


def sample_bundles(spec: DistributionSpec, rng: np.random.Generator, m: int) -> np.ndarray:
    """Draw ``m`` i.i.d. bundles as a mask array."""
    if isinstance(spec, UniformPowerSet):
        spec = Product.uniform(spec.k)
    if isinstance(spec, Product):
        p = np.array(spec.p)
        return _pack(rng.random((m, spec.k)) < p[None, :])
    if isinstance(spec, FixedSize):
        return mask_array((_floyd(spec.s, spec.k, rng) for _ in range(m)), spec.k)
    if isinstance(spec, Explicit):
        idx = rng.choice(len(spec.bundles), size=m, p=np.array(spec.weights))
        return mask_array((spec.bundles[j] for j in idx), spec.k)
    raise TypeError(f"unknown distribution {spec!r}")


def sample_bundle(spec: DistributionSpec, rng: np.random.Generator) -> int:
    return int(sample_bundles(spec, rng, 1)[0])


def make_sample_set(market: MarketInstance, spec: DistributionSpec, m: int,
                    rng: np.random.Generator) -> SampleSet:
    if m < 0:
        raise MarketError("sample count must be nonnegative")
    return SampleSet.from_market(market, sample_bundles(spec, rng, m))


# ---------------------------------------------------------------------------
# serialisation: "product:0.5", "product:0.1,0.2,...", "fixed:3", "uniform"
# ---------------------------------------------------------------------------

def parse_distribution(text: str, k: int) -> DistributionSpec:
    text = text.strip()
    if text.startswith("{"):
        return distribution_from_dict(json.loads(text), k)
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "uniform":
        return UniformPowerSet(k)
    if kind == "product":
        probs = [float(x) for x in arg.split(",")] if arg else [0.5]
        if len(probs) == 1:
            probs = probs * k
        if len(probs) != k:
            raise MarketError(f"product distribution needs 1 or {k} probabilities")
        return Product(tuple(probs))
    if kind == "fixed":
        return FixedSize(int(arg), k)
    raise MarketError(f"unknown distribution {text!r}")


def distribution_to_string(spec: DistributionSpec) -> str:
    if isinstance(spec, UniformPowerSet):
        return "uniform"
    if isinstance(spec, FixedSize):
        return f"fixed:{spec.s}"
    if isinstance(spec, Product):
        if len(set(spec.p)) == 1:
            return f"product:{spec.p[0]:g}"
        return "product:" + ",".join(repr(x) for x in spec.p)
    return json.dumps(distribution_to_dict(spec), separators=(",", ":"))


def distribution_to_dict(spec: DistributionSpec) -> dict:
    if isinstance(spec, Product):
        return {"kind": "product", "p": list(spec.p)}
    if isinstance(spec, FixedSize):
        return {"kind": "fixed", "s": spec.s, "k": spec.k}
    if isinstance(spec, UniformPowerSet):
        return {"kind": "uniform", "k": spec.k}
    return {"kind": "explicit", "k": spec.k, "bundles": [members(b) for b in spec.bundles],
            "weights": list(spec.weights)}


def distribution_from_dict(d: dict, k: int | None = None) -> DistributionSpec:
    kind = d["kind"]
    k = d.get("k", k)
    if kind == "product":
        return Product(tuple(d["p"]))
    if kind == "fixed":
        return FixedSize(int(d["s"]), int(k))
    if kind == "uniform":
        return UniformPowerSet(int(k))
    if kind == "explicit":
        return Explicit(tuple(bundle(b) for b in d["bundles"]), tuple(d["weights"]), int(k))
    raise MarketError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# worst-case instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnitDemandWorstCase:
    delta: float


@dataclass(frozen=True)
class SingleMindedWorstCase:
    pass


@dataclass(frozen=True)
class AdditiveWorstCase:
    delta: float


AdversarialKind = Union[UnitDemandWorstCase, SingleMindedWorstCase, AdditiveWorstCase]


def _gap_budgets(n: int, total: float, b1: float = 1.0) -> np.ndarray:
    """b_i = b1 - d_i with d_1 = 0 < d_2 < ... < d_n and sum(d) = total."""
    if n == 1:
        return np.array([b1])
    for eta in (0.1, 1e-2, 1e-3, 1e-4, 1e-6):
        raw = 1.0 + eta * np.arange(n - 1)
        gaps = total * raw / raw.sum()
        if gaps[-1] < b1:
            return b1 - np.concatenate([[0.0], gaps])
    raise MarketError("budget gaps too large to keep every budget positive")


def _favourites(n: int, k: int, rng: np.random.Generator, pool=None) -> np.ndarray:
    """Top min(n, |pool|) players get distinct goods; the rest get any good."""
    pool = np.arange(k) if pool is None else np.asarray(pool)
    top = min(n, len(pool))
    fav = np.empty(n, dtype=int)
    fav[:top] = rng.permutation(pool)[:top]
    fav[top:] = rng.choice(pool, size=n - top)
    return fav


def adversarial_instance(kind: AdversarialKind, n: int, k: int,
                         rng: np.random.Generator) -> tuple[MarketInstance, SampleSet]:
    """A hidden worst-case truth plus the single uninformative sample it is
    consistent with.  Each player values one favourite good at their budget."""
    if n < 2 or k < 2:
        raise MarketError("worst-case instances need n, k >= 2")
    G = full(k)

    if isinstance(kind, UnitDemandWorstCase):
        if not 0 < kind.delta < n - 1:
            raise MarketError(f"unit-demand delta must lie in (0, {n - 1})")
        b = _gap_budgets(n, kind.delta)
        values = np.zeros((n, k))
        values[np.arange(n), _favourites(n, k, rng)] = b
        market = MarketInstance(b, UnitDemand(values, allow_ties=True))
        return market, SampleSet([G], b[None, :], k)

    if isinstance(kind, SingleMindedWorstCase):
        b = np.sort(rng.uniform(1.0, 2.0, size=n))[::-1]
        while np.any(np.diff(b) >= 0):
            b = np.sort(rng.uniform(1.0, 2.0, size=n))[::-1]
        fav = _favourites(n, k, rng)
        market = MarketInstance(b, SingleMinded(tuple(1 << int(g) for g in fav), k))
        return market, SampleSet([G], np.ones((1, n)), k)

    if isinstance(kind, AdditiveWorstCase):
        if not 0 < kind.delta < k:
            raise MarketError(f"additive delta must lie in (0, {k})")
        last_gap = kind.delta / k
        b = 1.0 - last_gap * np.arange(n) / (n - 1)
        values = np.zeros((n, k))
        if n >= k:
            values[np.arange(n), _favourites(n, k, rng)] = b
            sample = G
        else:
            subset = np.sort(rng.choice(k, size=n, replace=False))
            values[np.arange(n), _favourites(n, k, rng, pool=subset)] = b
            for g in sorted(set(range(k)) - set(subset.tolist())):
                owner = int(rng.integers(n))
                values[owner, g] = b[owner]
            sample = bundle(subset)
        market = MarketInstance(b, Additive(values))
        return market, SampleSet([sample], b[None, :], k)

    raise TypeError(f"unknown adversarial kind {kind!r}")
