"""Brute-force ground truth on tiny instances.

exact_P and exact_delta enumerate every live/blocked assignment of the
(relevant) multi-level edges. exact_optimum needs P for every subset, so it
goes through ``subset_profits``, which enumerates each layer separately
(layers are independent) and turns per-world ancestor sets into P(S) for all
S with a subset-sum transform; tests check the two routes agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import LIVE, UNKNOWN, FullRealization, PartialRealization, observe
from .network import MultiLevelGraph, SocialNetwork, feature_mass

CHUNK = 1 << 15


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class EnumerationBudget:
    max_edges: int = 20

    def __post_init__(self):
        if not 0 <= self.max_edges <= 25:
            raise ValueError("max_edges must be in [0, 25]")

    def check(self, k: int):
        if k > self.max_edges:
            raise EnumerationTooLarge(f"{k} free edges exceed the enumeration limit {self.max_edges}")


DEFAULT_BUDGET = EnumerationBudget()


def _bit_rows(start: int, stop: int, k: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(k, dtype=np.int64)) & 1).astype(bool)


def _reach(tail, head, live, start):
    """Fixpoint reachability; live is (K, M), start is (K, N). Mutates start."""
    reach = start
    changed = True
    while changed:
        changed = False
        for e in range(len(tail)):
            new = reach[:, tail[e]] & live[:, e] & ~reach[:, head[e]]
            if new.any():
                reach[:, head[e]] |= new
                changed = True
    return reach


def _worlds(mlg: MultiLevelGraph, free: np.ndarray, fixed_live: np.ndarray):
    """Yield (live matrix, probability) chunks over all assignments of ``free`` edges."""
    k = len(free)
    p = mlg.prob[free]
    total = 1 << k
    for start in range(0, total, CHUNK):
        stop = min(total, start + CHUNK)
        bits = _bit_rows(start, stop, k)
        live = np.repeat(fixed_live[None, :], stop - start, axis=0)
        live[:, free] = bits
        prob = np.prod(np.where(bits, p, 1.0 - p), axis=1) if k else np.ones(stop - start)
        yield live, prob


def _start(mlg, users, rows):
    start = np.zeros((rows, mlg.num_nodes), dtype=bool)
    for u in users:
        start[:, mlg.feature_nodes_of(int(u))] = True
    return start


def exact_P(net: SocialNetwork, mlg: MultiLevelGraph, seeds,
            budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    """Expected profit of a seed set by summing over all realizations."""
    seeds = sorted(set(int(u) for u in seeds))
    if not seeds:
        return 0.0
    budget.check(mlg.num_edges)
    mass = feature_mass(net)
    free = np.arange(mlg.num_edges)
    total = 0.0
    for live, prob in _worlds(mlg, free, np.zeros(mlg.num_edges, dtype=bool)):
        reach = _reach(mlg.tail, mlg.head, live, _start(mlg, seeds, len(prob)))
        total += float(prob @ (reach @ mass))
    return total


def exact_delta(net: SocialNetwork, mlg: MultiLevelGraph, partial: PartialRealization, u: int,
                budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    """Conditional expected marginal profit of ``u`` given ``partial``.

    Averages over every completion of the unobserved edges.
    """
    u = int(u)
    if u in partial.dom:
        raise ValueError(f"node {u} already in dom")
    free = np.flatnonzero(partial.observed == UNKNOWN)
    budget.check(len(free))
    fixed_live = partial.observed == LIVE
    mass = feature_mass(net)
    total = 0.0
    for live, prob in _worlds(mlg, free, fixed_live):
        before = _reach(mlg.tail, mlg.head, live, _start(mlg, partial.dom, len(prob)))
        after = _reach(mlg.tail, mlg.head, live, before | _start(mlg, [u], len(prob)))
        total += float(prob @ ((after & ~before) @ mass))
    return total


def _layer_ancestor_masks(net: SocialNetwork, layer: int, budget: EnumerationBudget):
    """For each world of one layer: bitmask of users that reach each user."""
    n, m = net.n, net.m
    budget.check(m)
    src, dst = net.src, net.dst
    p = net.prob[:, layer]
    for start in range(0, 1 << m, CHUNK):
        stop = min(1 << m, start + CHUNK)
        live = _bit_rows(start, stop, m)
        prob = np.prod(np.where(live, p, 1.0 - p), axis=1) if m else np.ones(stop - start)
        anc = np.broadcast_to(np.int64(1) << np.arange(n, dtype=np.int64),
                              (stop - start, n)).copy()
        changed = True
        while changed:
            changed = False
            for e in range(m):
                cur = anc[:, dst[e]]
                upd = np.where(live[:, e], cur | anc[:, src[e]], cur)
                if np.any(upd != cur):
                    anc[:, dst[e]] = upd
                    changed = True
        yield anc, prob


def subset_profits(net: SocialNetwork, budget: EnumerationBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Exact P(S) for every subset S, indexed by its user bitmask."""
    n = net.n
    if n > 16:
        raise EnumerationTooLarge("subset enumeration limited to 16 users")
    full = (1 << n) - 1
    value = np.zeros(1 << n)
    mass = net.weights * net.profit[:, None]
    idx = np.arange(1 << n)
    comp = full ^ idx
    for layer in range(net.q):
        chunks = list(_layer_ancestor_masks(net, layer, budget))
        for v in range(n):
            # hist[A] = Pr[ancestors of v_i == A]
            hist = np.zeros(1 << n)
            for anc, prob in chunks:
                np.add.at(hist, anc[:, v], prob)
            # zeta transform: miss[X] = Pr[ancestors ⊆ X]
            miss = hist
            for b in range(n):
                bit = 1 << b
                sel = (idx & bit) != 0
                miss[sel] += miss[idx[sel] ^ bit]
            value += mass[v, layer] * (1.0 - miss[comp])
    value[0] = 0.0
    return value


def exact_optimum(net: SocialNetwork, mlg: MultiLevelGraph, budget: float,
                  enum_budget: EnumerationBudget = DEFAULT_BUDGET) -> tuple[frozenset, float]:
    """Best seed set with c(S) <= budget (deterministic knapsack)."""
    if net.n > 12:
        raise EnumerationTooLarge("exact_optimum is limited to 12 users")
    values = subset_profits(net, enum_budget)
    masks = np.arange(1 << net.n)
    bits = ((masks[:, None] >> np.arange(net.n)) & 1).astype(bool)
    costs = bits @ net.cost
    feasible = costs <= budget + 1e-12
    best = int(np.flatnonzero(feasible)[np.argmax(values[feasible])])
    return frozenset(np.flatnonzero(bits[best]).tolist()), float(values[best])


def reachable_partials(mlg: MultiLevelGraph, max_seeds: int | None = None,
                       budget: EnumerationBudget = DEFAULT_BUDGET) -> list[PartialRealization]:
    """Every partial realization reachable by seeding one node at a time.

    Starting from the empty one, each state is extended by every unseeded
    node under every completion of its unknown edges; states with the same
    seed set and observations are merged (seeding order is irrelevant).
    """
    budget.check(mlg.num_edges)
    limit = mlg.n if max_seeds is None else max_seeds
    start = PartialRealization.empty(mlg)
    seen = {_state_key(start): start}
    frontier = [start]
    while frontier:
        nxt = []
        for partial in frontier:
            if len(partial.dom) >= limit:
                continue
            free = np.flatnonzero(partial.observed == UNKNOWN)
            fixed_live = partial.observed == LIVE
            for u in range(mlg.n):
                if u in partial.dom:
                    continue
                for live, _ in _worlds(mlg, free, fixed_live):
                    for row in live:
                        child, _ = observe(partial, u, FullRealization(row))
                        key = _state_key(child)
                        if key not in seen:
                            seen[key] = child
                            nxt.append(child)
        frontier = nxt
    return list(seen.values())


def _state_key(partial: PartialRealization):
    return (tuple(sorted(partial.dom)), partial.observed.tobytes())


def extends(small: PartialRealization, big: PartialRealization) -> bool:
    """True when ``big`` contains every seed and observation of ``small``."""
    known = small.observed != UNKNOWN
    return (set(small.dom) <= set(big.dom)
            and bool(np.all(big.observed[known] == small.observed[known])))
