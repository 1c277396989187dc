"""Exact reference solutions used as efficiency-ratio denominators."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog, minimize

from .core import (
    Additive,
    MarketError,
    MarketInstance,
    Outcome,
    ResourceLimitError,
    SingleMinded,
    UnitDemand,
    evaluate,
    full,
    members,
    singleton_values,
)

DEFAULT_LIMIT = 2_000_000


def _require(market: MarketInstance, cls) -> None:
    if not isinstance(market.valuations, cls):
        raise MarketError(f"expected {cls.__name__} valuations, got {market.family}")


def optimal_ud_equilibrium(market: MarketInstance) -> Outcome:
    """Serial dictatorship on the true values; each pick costs the picker's budget."""
    _require(market, UnitDemand)
    v = market.valuations.values
    for row in v:
        if len(np.unique(row)) != len(row):
            raise MarketError("unit-demand rows must have distinct values")
    n, k = v.shape
    b = market.budgets
    allocation = [0] * n
    prices = np.zeros(k)
    free = np.ones(k, dtype=bool)
    for i in range(n):
        if not free.any():
            break
        g = int(np.flatnonzero(free)[np.argmax(v[i, free])])
        allocation[i] = 1 << g
        prices[g] = b[i]
        free[g] = False
    allocation[n - 1] |= sum(1 << int(g) for g in np.flatnonzero(free))
    return Outcome(allocation, prices)


def opt_welfare_additive(market: MarketInstance) -> tuple:
    """Each good to the player valuing it most (lowest index on ties)."""
    _require(market, Additive)
    v = market.valuations.values
    owner = np.argmax(v, axis=0)
    allocation = [0] * market.n
    for g, i in enumerate(owner):
        allocation[int(i)] |= 1 << g
    return tuple(allocation)


def _max_matching(market: MarketInstance) -> tuple:
    v = market.valuations.values
    rows, cols = linear_sum_assignment(v, maximize=True)
    allocation = [0] * market.n
    for i, g in zip(rows, cols):
        allocation[int(i)] |= 1 << int(g)
    # goods nobody is matched to add nothing under unit demand; keep them with player 0
    spare = full(market.k) & ~sum(allocation)
    allocation[0] |= spare
    return tuple(allocation)


def _set_packing(market: MarketInstance, limit: int) -> tuple:
    desired = market.valuations.desired
    n = market.n
    best: list = [()]
    nodes = 0

    def grow(start: int, used: int, chosen: tuple) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > limit:
            raise ResourceLimitError(f"set packing search exceeded {limit} nodes")
        if len(chosen) > len(best[0]):
            best[0] = chosen
        if len(chosen) + (n - start) <= len(best[0]):
            return
        for i in range(start, n):
            if not desired[i] & used:
                grow(i + 1, used | desired[i], chosen + (i,))

    grow(0, 0, ())
    allocation = [0] * n
    for i in best[0]:
        allocation[i] = desired[i]
    allocation[0] |= full(market.k) & ~sum(allocation)
    return tuple(allocation)


#: largest k for which branch and bound tabulates every bundle's value
TABLE_MAX_K = 16


def _branch_and_bound(market: MarketInstance, limit: int) -> tuple:
    """Assign goods one at a time.  A node is pruned when neither bound beats
    the incumbent: current welfare plus each unassigned good's largest
    marginal value (valid for subadditive families), or every player's value
    for their bundle plus all unassigned goods (valid for monotone ones)."""
    truth = market.valuations
    n, k = market.n, market.k
    single = singleton_values(truth)
    order = sorted(range(k), key=lambda g: -single[:, g].max())

    if k <= TABLE_MAX_K:
        table = truth.values_of(np.arange(1 << k, dtype=np.uint64)).T.tolist()

        def value(i: int, mask: int) -> float:
            return table[i][mask]
    else:
        def value(i: int, mask: int) -> float:
            return evaluate(truth, i, mask)

    # greedy incumbent: each good to the largest marginal gain
    alloc = [0] * n
    cur = [0.0] * n
    for g in order:
        gains = [value(i, alloc[i] | 1 << g) - cur[i] for i in range(n)]
        i = int(np.argmax(gains))
        alloc[i] |= 1 << g
        cur[i] += gains[i]
    best_alloc, best_w = list(alloc), sum(cur)

    nodes = 0
    alloc = [0] * n
    cur = [0.0] * n

    def search(depth: int, w: float) -> None:
        nonlocal nodes, best_alloc, best_w
        nodes += 1
        if nodes > limit:
            raise ResourceLimitError(f"branch and bound exceeded {limit} nodes")
        if depth == k:
            if w > best_w + 1e-12:
                best_w, best_alloc = w, list(alloc)
            return
        rest = order[depth:]
        left = sum(1 << g for g in rest)
        if sum(value(i, alloc[i] | left) for i in range(n)) <= best_w + 1e-12:
            return
        bound = w + sum(max(value(i, alloc[i] | 1 << g) - cur[i] for i in range(n)) for g in rest)
        if bound <= best_w + 1e-12:
            return
        g = order[depth]
        gains = [(value(i, alloc[i] | 1 << g) - cur[i], i) for i in range(n)]
        for gain, i in sorted(gains, key=lambda t: (-t[0], t[1])):
            old = cur[i]
            alloc[i] |= 1 << g
            cur[i] = old + gain
            search(depth + 1, w + gain)
            alloc[i] &= ~(1 << g)
            cur[i] = old

    search(0, 0.0)
    return tuple(best_alloc)


def opt_welfare_bruteforce(market: MarketInstance, limit: int = DEFAULT_LIMIT,
                           method: str = "auto") -> tuple:
    """Welfare-maximizing partition of the goods, ignoring budgets.

    ``method="auto"`` uses a closed form where one exists (assignment for
    unit demand, per-good argmax for additive, set packing for single
    minded); ``"search"`` forces branch and bound for the subadditive
    families.  Raises ResourceLimitError once ``limit`` nodes are visited.
    """
    truth = market.valuations
    if isinstance(truth, SingleMinded):
        return _set_packing(market, limit)
    if method == "auto":
        if isinstance(truth, Additive):
            return opt_welfare_additive(market)
        if isinstance(truth, UnitDemand):
            return _max_matching(market)
    elif method != "search":
        raise MarketError(f"unknown method {method!r}")
    return _branch_and_bound(market, limit)


def _support_prices(desired: tuple, winners: tuple, budgets: np.ndarray, k: int):
    """Prices under which exactly ``winners`` can afford their sets, or None.

    Maximizes a common slack s: winners pay at most b_i - s, everyone else
    faces at least b_j + s.  Strict feasibility is s > 0.
    """
    n = len(desired)
    win = set(winners)
    a_ub, b_ub = [], []
    for i in range(n):
        row = np.zeros(k + 1)
        row[members(desired[i])] = 1.0
        row[k] = 1.0
        if i in win:
            a_ub.append(row)
            b_ub.append(budgets[i])
        else:
            row[:k] *= -1
            a_ub.append(row)
            b_ub.append(-budgets[i])
    c = np.zeros(k + 1)
    c[k] = -1.0
    bounds = [(0, None)] * k + [(None, float(budgets.max()))]
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds, method="highs")
    if res.status != 0 or res.x[k] <= 1e-9:
        return None
    return np.maximum(res.x[:k], 0.0)


def optimal_sm_welfare_equilibrium(market: MarketInstance, limit: int = DEFAULT_LIMIT) -> Outcome:
    """Equilibrium with the most winners, found by trying disjoint winner sets
    from largest to smallest and checking price feasibility with an LP.

    Goods outside every winner's set stay unallocated.
    """
    _require(market, SingleMinded)
    n, k = market.n, market.k
    if n > 20:
        raise MarketError("winner-set enumeration supports n <= 20")
    desired = market.valuations.desired
    b = market.budgets
    checked = 0
    for size in range(n, 0, -1):
        for winners in combinations(range(n), size):
            used = 0
            ok = True
            for i in winners:
                if desired[i] & used:
                    ok = False
                    break
                used |= desired[i]
            if not ok:
                continue
            checked += 1
            if checked > limit:
                raise ResourceLimitError(f"checked {limit} winner sets without finishing")
            prices = _support_prices(desired, winners, b, k)
            if prices is None:
                continue
            allocation = [desired[i] if i in winners else 0 for i in range(n)]
            values = [1.0 if i in winners else 0.0 for i in range(n)]
            return Outcome(allocation, prices, values=values)
    raise MarketError("no price-supported winner set found")


@dataclass(frozen=True)
class FractionalAllocation:
    shares: np.ndarray
    prices: np.ndarray
    bids: np.ndarray
    iterations: int
    exact: bool = False

    def spending(self) -> np.ndarray:
        return self.bids.sum(axis=1)

    def welfare(self, values: np.ndarray) -> float:
        return float((self.shares * values).sum())


# relative slack allowed when verifying a polished equilibrium
POLISH_RTOL = 1e-10


def _spanning_forest(closeness: np.ndarray, slack: float) -> tuple[np.ndarray, list]:
    """Kruskal over player/good edges with ``closeness >= 1 - slack``, closest
    first, plus the closest edge of any good left out.  Returns the forest's
    edge matrix and its components as (players, goods) lists."""
    n, k = closeness.shape
    parent = list(range(n + k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = np.zeros((n, k), dtype=bool)
    near = closeness >= 1 - slack
    # a good nobody is close to still needs its most likely buyer
    lonely = ~near.any(axis=0)
    near[closeness.argmax(axis=0)[lonely], np.flatnonzero(lonely)] = True
    rows, cols = np.nonzero(near)
    for t in np.argsort(-closeness[rows, cols], kind="stable"):
        i, g = int(rows[t]), int(cols[t])
        ri, rg = find(i), find(n + g)
        if ri != rg:
            parent[ri] = rg
            edges[i, g] = True
    groups: dict = {}
    for x in range(n + k):
        groups.setdefault(find(x), []).append(x)
    comps = [([x for x in grp if x < n], [x - n for x in grp if x >= n]) for grp in groups.values()]
    return edges, comps


def _polish(v: np.ndarray, b: np.ndarray, prices: np.ndarray, guess: np.ndarray, slack: float):
    """Exact equilibrium near approximate ``prices`` and bids ``guess``, or None.

    Candidate edges are the goods within ``slack`` of each player's best
    bang per buck; a spanning forest of them (closest first) fixes the
    price ratios on each component, and money clearing fixes the scale.
    The bids come from an LP minimizing L1 distance to ``guess``.  Every
    equilibrium condition is re-checked before returning.
    """
    n, k = v.shape
    bpb = v / prices[None, :]
    edges, comps = _spanning_forest(bpb / bpb.max(axis=1, keepdims=True), slack)
    new = np.zeros(k)
    for players, goods in comps:
        if not players or not goods:
            return None
        rows, cols = np.nonzero(edges[np.ix_(players, goods)])
        # unknowns: log p for each good, log(1/MBB) for each player
        a = np.zeros((len(rows) + 1, len(goods) + len(players)))
        a[np.arange(len(rows)), cols] = 1.0
        a[np.arange(len(rows)), len(goods) + rows] = -1.0
        a[-1, 0] = 1.0
        rhs = np.append(np.log(v[np.array(players)[rows], np.array(goods)[cols]]), 0.0)
        sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        if np.abs(a @ sol - rhs).max() > 1e-9:
            return None
        rel = np.exp(sol[: len(goods)])
        new[goods] = rel * b[players].sum() / rel.sum()

    # bids may use any best-bang-per-buck edge; stay as close to the guess as
    # possible.  Unknowns are fractions of each good so tiny prices keep precision.
    best = (v / new[None, :]).max(axis=1)
    on_best = v / new[None, :] >= best[:, None] * (1 - POLISH_RTOL)
    idx = np.argwhere(on_best)
    e = len(idx)
    price = new[idx[:, 1]]
    a_eq = np.zeros((n + k, 2 * e))
    a_eq[idx[:, 0], np.arange(e)] = price
    a_eq[n + idx[:, 1], np.arange(e)] = 1.0
    # t >= |x - guess| as two inequalities on (x, t)
    a_ub = np.block([[np.eye(e), -np.eye(e)], [-np.eye(e), -np.eye(e)]])
    g = guess[idx[:, 0], idx[:, 1]] / price
    res = linprog(np.r_[np.zeros(e), price], A_ub=a_ub, b_ub=np.r_[g, -g],
                  A_eq=a_eq, b_eq=np.concatenate([b, np.ones(k)]),
                  bounds=[(0, None)] * (2 * e), method="highs")
    if res.status != 0:
        return None
    bids = np.zeros((n, k))
    bids[idx[:, 0], idx[:, 1]] = np.maximum(res.x[:e], 0.0) * price

    # re-verify: budgets spent, goods cleared, money only on best bang per buck
    if not (np.allclose(bids.sum(axis=1), b, rtol=POLISH_RTOL, atol=0)
            and np.allclose(bids.sum(axis=0), new, rtol=POLISH_RTOL, atol=0)
            and np.all(on_best | (bids <= 0))):
        return None
    return new, bids


def divisible_additive_equilibrium(market: MarketInstance, iterations: int = 10_000,
                                   tolerance: float = 1e-8, polish_every: int = 250) -> FractionalAllocation:
    """Linear Fisher market equilibrium by proportional response dynamics.

    Each round every player splits their budget across goods in proportion
    to the utility each good delivered at the previous prices.  Bids on
    goods outside a player's best bang-per-buck set only decay like 1/t, so
    every ``polish_every`` rounds (and at the end) the current prices are
    used to guess the equilibrium support, which is then solved and verified
    exactly.  Stops at the first verified polish or once the largest bid
    change drops below ``tolerance``.  If the dynamics never get close enough,
    prices from the convex dual program seed one last polish.  Goods nobody
    values get price 0.
    """
    _require(market, Additive)
    full_v = market.valuations.values
    b = market.budgets
    if np.any(full_v.sum(axis=1) <= 0):
        raise MarketError("every player needs a positive value for some good")
    # goods nobody wants sell at price 0 and stay unallocated
    wanted = full_v.max(axis=0) > 0
    v = full_v[:, wanted]
    bids = b[:, None] * v / v.sum(axis=1, keepdims=True)
    converged = False
    polished = None
    exact = False
    it = 0
    for it in range(1, iterations + 1):
        prices = bids.sum(axis=0)
        util = v * bids / prices[None, :]
        new = b[:, None] * util / util.sum(axis=1, keepdims=True)
        change = np.abs(new - bids).max()
        bids = new
        if change < tolerance:
            converged = True
            break
        if polish_every and it % polish_every == 0:
            polished = _try_polish(v, b, bids)
            if polished is not None:
                break
    if polished is None:
        polished = _try_polish(v, b, bids)
    if polished is None:
        polished = _try_polish(v, b, bids, _dual_prices(v, b, bids.sum(axis=0)))
    if polished is not None:
        bids, exact = polished[1], True
    elif not converged:
        raise ResourceLimitError(f"proportional response did not converge in {iterations} rounds")
    all_bids = np.zeros(full_v.shape)
    all_bids[:, wanted] = bids
    prices = all_bids.sum(axis=0)
    shares = np.divide(all_bids, prices[None, :], out=np.zeros_like(all_bids),
                       where=prices[None, :] > 0)
    return FractionalAllocation(shares, prices, all_bids, it, exact=exact)


def _try_polish(v, b, bids, prices=None):
    prices = bids.sum(axis=0) if prices is None else prices
    for slack in (1e-2, 1e-3, 1e-4, 1e-6):
        out = _polish(v, b, prices, bids, slack)
        if out is not None:
            return out
    return None


def _dual_prices(v: np.ndarray, b: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Equilibrium prices from the convex dual in log space:
    minimize sum(p) - sum(b * log beta) subject to beta_i v_ig <= p_g."""
    n, k = v.shape
    ii, gg = np.nonzero(v > 0)
    a = np.zeros((len(ii), k + n))
    a[np.arange(len(ii)), gg] = 1.0
    a[np.arange(len(ii)), k + ii] = -1.0
    lv = np.log(v[ii, gg])
    q0 = np.log(start)
    r0 = -np.array([np.max(np.log(row[row > 0]) - q0[row > 0]) for row in v])
    res = minimize(lambda z: np.exp(z[:k]).sum() - b @ z[k:], np.r_[q0, r0],
                   jac=lambda z: np.r_[np.exp(z[:k]), -b], method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda z: a @ z - lv, "jac": lambda z: a}],
                   options={"ftol": 1e-16, "maxiter": 1000})
    # precision-limited exits still carry usable prices; _polish re-verifies
    return np.exp(res.x[:k])
