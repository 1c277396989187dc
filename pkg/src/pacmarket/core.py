"""Domain types shared by every algorithm.

Bundles are plain Python ints used as bitmasks: bit ``g`` set means good ``g``
is in the bundle.  Batches of bundles are stored in numpy arrays (``uint64``
when ``k <= 64``, ``object`` holding Python ints otherwise) so set operations
vectorise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

#: Price of a burnt good.  ``inf`` absorbs in sums and never compares <= a budget.
BURN = math.inf


class MarketError(ValueError):
    """Invalid market data (bad shapes, ties, non-decreasing budgets...)."""


class ResourceLimitError(RuntimeError):
    """An exhaustive search would exceed its configured budget."""


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------

def bundle(indices: Iterable[int] = ()) -> int:
    mask = 0
    for g in indices:
        g = int(g)
        if g < 0:
            raise MarketError(f"negative good index {g}")
        mask |= 1 << g
    return mask


def members(mask: int) -> list[int]:
    """Good indices in ``mask``, ascending."""
    mask = int(mask)
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def size(mask: int) -> int:
    return int(mask).bit_count()


def full(k: int) -> int:
    return (1 << k) - 1


def lowest(mask: int) -> int:
    """Index of the lowest good in a nonempty bundle."""
    mask = int(mask)
    return (mask & -mask).bit_length() - 1


def check_bundle(mask: int, k: int) -> int:
    mask = int(mask)
    if mask < 0 or mask >> k:
        raise MarketError(f"bundle {members(mask)} has goods outside [0, {k})")
    return mask


def mask_array(masks: Iterable[int], k: int) -> np.ndarray:
    masks = [int(x) for x in masks]
    if k <= 64:
        return np.array(masks, dtype=np.uint64)
    arr = np.empty(len(masks), dtype=object)
    arr[:] = masks
    return arr


def as_scalar(mask: int, arr: np.ndarray):
    """Wrap ``mask`` so it combines with ``arr`` without dtype promotion."""
    return np.uint64(mask) if arr.dtype == np.uint64 else int(mask)


def membership(masks: np.ndarray, k: int) -> np.ndarray:
    """Boolean (m, k) matrix: ``out[j, g]`` is True iff good g is in bundle j."""
    masks = np.asarray(masks)
    if masks.dtype == np.uint64:
        shifts = np.arange(k, dtype=np.uint64)
        return ((masks[:, None] >> shifts[None, :]) & np.uint64(1)).astype(bool)
    out = np.zeros((len(masks), k), dtype=bool)
    for j, mask in enumerate(masks):
        out[j, members(mask)] = True
    return out


def popcounts(masks: np.ndarray) -> np.ndarray:
    if masks.dtype == np.uint64:
        return np.bitwise_count(masks).astype(np.int64)
    return np.array([int(x).bit_count() for x in masks], dtype=np.int64)


# ---------------------------------------------------------------------------
# valuations
# ---------------------------------------------------------------------------

def _matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2:
        raise MarketError(f"{name} values must be an n x k matrix")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise MarketError(f"{name} values must be finite and nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UnitDemand:
    """v_i(S) = max_{g in S} v_i(g).  Rows must be tie-free unless ``allow_ties``."""

    values: np.ndarray
    allow_ties: bool = False

    def __post_init__(self):
        arr = _matrix(self.values, "unit-demand")
        object.__setattr__(self, "values", arr)
        if not self.allow_ties:
            for i, row in enumerate(arr):
                if len(np.unique(row)) != len(row):
                    raise MarketError(f"unit-demand row {i} has tied values")

    n = property(lambda self: self.values.shape[0])
    k = property(lambda self: self.values.shape[1])

    def value(self, i: int, mask: int) -> float:
        goods = members(mask)
        return float(self.values[i, goods].max()) if goods else 0.0

    def values_of(self, masks: np.ndarray) -> np.ndarray:
        mem = membership(masks, self.k)
        vals = np.where(mem[:, None, :], self.values[None, :, :], 0.0)
        return vals.max(axis=2) if self.k else np.zeros((len(masks), self.n))


@dataclass(frozen=True)
class SingleMinded:
    """v_i(S) = 1 if the desired bundle D_i is contained in S, else 0."""

    desired: tuple
    k: int

    def __post_init__(self):
        desired = tuple(int(d) for d in self.desired)
        for i, d in enumerate(desired):
            if d == 0:
                raise MarketError(f"player {i} has an empty desired set")
            check_bundle(d, self.k)
        object.__setattr__(self, "desired", desired)

    n = property(lambda self: len(self.desired))

    def value(self, i: int, mask: int) -> float:
        d = self.desired[i]
        return 1.0 if int(mask) & d == d else 0.0

    def values_of(self, masks: np.ndarray) -> np.ndarray:
        out = np.zeros((len(masks), self.n))
        for i, d in enumerate(self.desired):
            dd = as_scalar(d, masks)
            out[:, i] = (masks & dd) == dd
        return out


@dataclass(frozen=True)
class Additive:
    """v_i(S) = sum_{g in S} v_i(g)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _matrix(self.values, "additive"))

    n = property(lambda self: self.values.shape[0])
    k = property(lambda self: self.values.shape[1])

    # both paths add goods left to right so equal bundles get identical floats

    def value(self, i: int, mask: int) -> float:
        total = 0.0
        for g in members(mask):
            total += float(self.values[i, g])
        return total

    def values_of(self, masks: np.ndarray) -> np.ndarray:
        mem = membership(masks, self.k)
        out = np.zeros((len(mem), self.n))
        for g in range(self.k):
            out += np.where(mem[:, g, None], self.values[None, :, g], 0.0)
        return out


@dataclass(frozen=True)
class ThresholdSubmodular:
    """Each good lives in a time slot; a player watches the best good per slot
    and only the ``threshold`` best slots count."""

    values: np.ndarray
    slot_of: tuple
    threshold: int

    def __post_init__(self):
        arr = _matrix(self.values, "threshold-submodular")
        object.__setattr__(self, "values", arr)
        slot_of = tuple(int(s) for s in self.slot_of)
        if len(slot_of) != arr.shape[1]:
            raise MarketError("slot_of must have one entry per good")
        if self.threshold < 1:
            raise MarketError("threshold must be a positive integer")
        object.__setattr__(self, "slot_of", slot_of)

    n = property(lambda self: self.values.shape[0])
    k = property(lambda self: self.values.shape[1])

    @property
    def slots(self) -> list[int]:
        return sorted(set(self.slot_of))

    def value(self, i: int, mask: int) -> float:
        best: dict[int, float] = {}
        for g in members(mask):
            s = self.slot_of[g]
            best[s] = max(best.get(s, 0.0), float(self.values[i, g]))
        top = sorted(best.values(), reverse=True)[: self.threshold]
        return float(sum(top))

    def values_of(self, masks: np.ndarray) -> np.ndarray:
        mem = membership(masks, self.k)
        slot_arr = np.array(self.slot_of)
        per_slot = []
        for s in self.slots:
            cols = slot_arr == s
            vals = np.where(mem[:, None, cols], self.values[None, :, cols], 0.0)
            per_slot.append(vals.max(axis=2))
        if not per_slot:
            return np.zeros((len(masks), self.n))
        stacked = np.sort(np.stack(per_slot, axis=2), axis=2)[:, :, ::-1]
        out = np.zeros(stacked.shape[:2])
        for col in range(min(self.threshold, stacked.shape[2])):
            out += stacked[:, :, col]
        return out


ValuationProfile = Union[UnitDemand, SingleMinded, Additive, ThresholdSubmodular]

FAMILIES = {
    "unit-demand": UnitDemand,
    "single-minded": SingleMinded,
    "additive": Additive,
    "submodular": ThresholdSubmodular,
}


def family_of(profile: ValuationProfile) -> str:
    for name, cls in FAMILIES.items():
        if isinstance(profile, cls):
            return name
    raise TypeError(f"unknown valuation profile {type(profile).__name__}")


def evaluate(profile: ValuationProfile, player: int, mask: int) -> float:
    """Value of ``mask`` to ``player``; the empty bundle is worth 0."""
    if not 0 <= player < profile.n:
        raise MarketError(f"player {player} out of range")
    check_bundle(mask, profile.k)
    return profile.value(player, mask)


def singleton_values(profile: ValuationProfile) -> np.ndarray:
    """n x k matrix of v_i({g})."""
    if isinstance(profile, (UnitDemand, Additive, ThresholdSubmodular)):
        return np.array(profile.values)
    return np.array([[profile.value(i, 1 << g) for g in range(profile.k)] for i in range(profile.n)])


# ---------------------------------------------------------------------------
# markets and samples
# ---------------------------------------------------------------------------

def check_budgets(budgets: Sequence[float]) -> np.ndarray:
    b = np.array(budgets, dtype=float)
    if b.ndim != 1 or len(b) == 0:
        raise MarketError("budgets must be a nonempty vector")
    if np.any(b <= 0) or not np.all(np.isfinite(b)):
        raise MarketError("budgets must be positive and finite")
    if np.any(np.diff(b) >= 0):
        raise MarketError("budgets must be strictly decreasing")
    b.setflags(write=False)
    return b


@dataclass(frozen=True)
class MarketInstance:
    budgets: np.ndarray
    valuations: ValuationProfile

    def __post_init__(self):
        object.__setattr__(self, "budgets", check_budgets(self.budgets))
        if len(self.budgets) != self.valuations.n:
            raise MarketError(
                f"{len(self.budgets)} budgets for {self.valuations.n} players"
            )

    n = property(lambda self: self.valuations.n)
    k = property(lambda self: self.valuations.k)

    @property
    def family(self) -> str:
        return family_of(self.valuations)

    def is_budget_normalized(self, rtol: float = 1e-12) -> bool:
        top = singleton_values(self.valuations).max(axis=1)
        return bool(np.allclose(top, self.budgets, rtol=rtol, atol=0))


@dataclass(frozen=True)
class SampleSet:
    """Observed bundles with every player's value for each of them.

    ``values[j, i]`` is player i's value for ``bundles[j]``.
    """

    bundles: np.ndarray
    values: np.ndarray
    k: int

    def __post_init__(self):
        bundles = mask_array(list(self.bundles), self.k)
        values = np.array(self.values, dtype=float)
        if values.size == 0 and values.ndim != 2:
            values = values.reshape(len(bundles), 0)
        if values.ndim != 2 or values.shape[0] != len(bundles):
            raise MarketError("values must have one row per sampled bundle")
        for mask in bundles:
            check_bundle(int(mask), self.k)
        bundles.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "bundles", bundles)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_records(cls, records: Iterable[tuple[int, Sequence[float]]], k: int, n: int) -> "SampleSet":
        records = list(records)
        bundles = [int(b) for b, _ in records]
        values = np.array([list(v) for _, v in records], dtype=float).reshape(len(records), n)
        return cls(bundles, values, k)

    @classmethod
    def from_market(cls, market: MarketInstance, masks: Iterable[int]) -> "SampleSet":
        arr = mask_array(masks, market.k)
        return cls(arr, market.valuations.values_of(arr), market.k)

    def __len__(self) -> int:
        return len(self.bundles)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def records(self) -> Iterator[tuple[int, np.ndarray]]:
        for mask, vals in zip(self.bundles, self.values):
            yield int(mask), vals

    def prefix(self, m: int) -> "SampleSet":
        return SampleSet(self.bundles[:m], self.values[:m], self.k)

    def union(self) -> int:
        out = 0
        for mask in self.bundles:
            out |= int(mask)
        return out

    def check_against(self, profile: ValuationProfile, atol: float = 1e-9) -> None:
        """Raise if the recorded values disagree with ``profile``."""
        if len(self) == 0:
            return
        expected = profile.values_of(self.bundles)
        bad = np.argwhere(~np.isclose(expected, self.values, atol=atol, rtol=0))
        if len(bad):
            j, i = bad[0]
            raise MarketError(
                f"sample {j}: player {i} value {self.values[j, i]} != {expected[j, i]}"
            )


# ---------------------------------------------------------------------------
# outcomes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Outcome:
    """An allocation with a price vector.

    ``values`` optionally carries, per player, the value of their own bundle
    as certified by the algorithm from the samples alone (a lower bound on
    the true value).  It lets loss be evaluated without the hidden truth.
    """

    allocation: tuple
    prices: np.ndarray
    values: tuple | None = None
    burnt_count: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "allocation", tuple(int(a) for a in self.allocation))
        prices = np.array(self.prices, dtype=float)
        if np.any(prices < 0) or np.any(np.isnan(prices)):
            raise MarketError("prices must be nonnegative")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "burnt_count", int(np.isinf(prices).sum()))

    n = property(lambda self: len(self.allocation))
    k = property(lambda self: len(self.prices))

    @property
    def burnt(self) -> int:
        return bundle(np.flatnonzero(np.isinf(self.prices)))

    @property
    def allocated(self) -> int:
        out = 0
        for a in self.allocation:
            out |= a
        return out

    def price_of(self, mask: int) -> float:
        goods = members(mask)
        return float(self.prices[goods].sum()) if goods else 0.0

    def prices_of(self, masks: np.ndarray) -> np.ndarray:
        return bundle_prices(membership(masks, self.k), self.prices)


def bundle_prices(mem: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """Price of each row of a membership matrix; any burnt member gives inf."""
    burnt = np.isinf(prices)
    finite = np.where(burnt, 0.0, prices)
    total = mem.astype(float) @ finite
    if burnt.any():
        total[(mem & burnt[None, :]).any(axis=1)] = BURN
    return total


def affordable(outcome: Outcome, mask: int, budget: float) -> bool:
    return outcome.price_of(mask) <= budget


def validate_outcome(outcome: Outcome, k: int) -> list[str]:
    """Structural problems with ``outcome``; an empty list means it is well formed."""
    problems = []
    if outcome.k != k:
        problems.append(f"price vector has {outcome.k} entries, expected {k}")
    owner: dict[int, int] = {}
    burnt = outcome.burnt
    for i, a in enumerate(outcome.allocation):
        for g in members(a):
            if g >= k:
                problems.append(f"player {i} holds out-of-range good {g}")
                continue
            if g in owner:
                problems.append(f"good {g} allocated twice (players {owner[g]} and {i})")
            owner[g] = i
            if burnt >> g & 1:
                problems.append(f"good {g} is burnt but allocated to player {i}")
    return problems
