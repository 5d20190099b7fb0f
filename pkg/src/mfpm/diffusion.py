"""Realizations, per-layer cascades, profit and full-adoption observation.

Thresholds are never sampled: with theta uniform on [0, 1], a user whose
accepted feature weights sum to s buys with probability s, so profit is
computed in expectation over thresholds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .network import MultiLevelGraph, SocialNetwork, feature_mass

UNKNOWN, BLOCKED, LIVE = -1, 0, 1


def kernel_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**32 - 1))


@dataclass(frozen=True, eq=False)
class FullRealization:
    """Live/blocked state of every multi-level edge."""

    live: np.ndarray

    def __post_init__(self):
        self.live.setflags(write=False)


def sample_realization(mlg: MultiLevelGraph, rng: np.random.Generator) -> FullRealization:
    return FullRealization(rng.random(mlg.num_edges) < mlg.prob)


def realization_probability(mlg: MultiLevelGraph, phi: FullRealization) -> float:
    return float(np.prod(np.where(phi.live, mlg.prob, 1.0 - mlg.prob)))


def _seed_sources(mlg: MultiLevelGraph, seeds) -> list[int]:
    return sorted(int(f) for u in seeds for f in mlg.feature_nodes_of(int(u)))


def diffuse(mlg: MultiLevelGraph, phi: FullRealization, seeds) -> np.ndarray:
    """Accepted feature nodes per layer, as a (q, n) boolean array."""
    accepted = np.zeros(mlg.num_nodes, dtype=bool)
    queue = deque()
    for f in _seed_sources(mlg, seeds):
        if not accepted[f]:
            accepted[f] = True
            queue.append(f)
    while queue:
        f = queue.popleft()
        for e in mlg.out_edge[mlg.out_ptr[f]:mlg.out_ptr[f + 1]]:
            h = mlg.head[e]
            if phi.live[e] and not accepted[h]:
                accepted[h] = True
                queue.append(h)
    return accepted.reshape(mlg.q, mlg.n)


def profit(net: SocialNetwork, accepted: np.ndarray) -> float:
    """Sum over users of b(u) times the weight of u's accepted features."""
    acc = np.asarray(accepted, dtype=bool).reshape(net.q, net.n)
    return float(net.profit @ (acc.T * net.weights).sum(axis=1))


def mc_profit(net: SocialNetwork, mlg: MultiLevelGraph, seeds, k: int,
              rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo estimate of P(seeds): (mean, standard error) over k worlds."""
    if k <= 0:
        raise ValueError("k must be positive")
    sources = np.asarray(_seed_sources(mlg, seeds), dtype=np.int64)
    if sources.size == 0:
        return 0.0, 0.0
    alive = np.ones(mlg.num_nodes, dtype=bool)
    s1, s2 = _kernels.mc_profit(kernel_seed(rng), k, sources, mlg.out_ptr, mlg.out_edge,
                                mlg.head, mlg.prob, alive, feature_mass(net))
    mean = s1 / k
    var = max(s2 / k - mean * mean, 0.0) * k / max(k - 1, 1)
    return mean, float(np.sqrt(var / k))


# public alias; despite the name it is a Monte-Carlo estimate, see oracle.exact_P for exact values
exact_profit_expectation = mc_profit


class ResidualGraph:
    """Multi-level subgraph induced by still-unaccepted feature nodes.

    ``W`` is the total profit mass b(v)·w_v^i on the residual nodes and
    ``W_star`` the smallest positive such mass (nodes of zero mass are never
    RR targets, so they are left out of the minimum).
    """

    def __init__(self, net: SocialNetwork, mlg: MultiLevelGraph, alive: np.ndarray,
                 W: float | None = None):
        self.net, self.mlg = net, mlg
        self.alive = np.asarray(alive, dtype=bool)
        self.mass = np.where(self.alive, feature_mass(net), 0.0)
        self.W = float(self.mass.sum()) if W is None else float(W)
        positive = self.mass[self.mass > 0]
        self.W_star = float(positive.min()) if positive.size else 0.0
        self._cum = None

    @classmethod
    def full(cls, net, mlg) -> "ResidualGraph":
        return cls(net, mlg, np.ones(mlg.num_nodes, dtype=bool))

    @classmethod
    def of(cls, net, mlg, partial: "PartialRealization") -> "ResidualGraph":
        return cls(net, mlg, ~partial.accepted)

    def without(self, removed) -> "ResidualGraph":
        """Drop feature nodes, subtracting their mass from W incrementally."""
        removed = np.asarray(removed, dtype=np.int64)
        removed = removed[self.alive[removed]]
        alive = self.alive.copy()
        alive[removed] = False
        return ResidualGraph(self.net, self.mlg, alive, self.W - self.mass[removed].sum())

    @property
    def empty(self) -> bool:
        return not np.any(self.mass > 0)

    @property
    def node_count(self) -> int:
        return int(self.alive.sum())

    def cumulative_mass(self):
        if self._cum is None:
            cum = np.cumsum(self.mass)
            last = int(np.flatnonzero(self.mass > 0)[-1]) if not self.empty else -1
            self._cum = (cum, last)
        return self._cum


class PartialRealization:
    """Observed edge states, chosen seeds and accepted feature nodes.

    ``observed[e]`` is -1 (unknown), 0 (blocked) or 1 (live). Under
    full-adoption feedback an edge is observed exactly when its tail is
    accepted.
    """

    def __init__(self, mlg: MultiLevelGraph, observed: np.ndarray, dom: Sequence[int],
                 accepted: np.ndarray):
        self.mlg = mlg
        self.observed = observed
        self.dom = tuple(int(u) for u in dom)
        self.accepted = accepted

    @classmethod
    def empty(cls, mlg: MultiLevelGraph) -> "PartialRealization":
        return cls(mlg, np.full(mlg.num_edges, UNKNOWN, dtype=np.int8), (),
                   np.zeros(mlg.num_nodes, dtype=bool))

    @property
    def accepted_layers(self) -> np.ndarray:
        return self.accepted.reshape(self.mlg.q, self.mlg.n)

    def key(self) -> tuple:
        return (self.dom, self.observed.tobytes())

    def consistent_with(self, phi: FullRealization) -> bool:
        known = self.observed != UNKNOWN
        return bool(np.all(phi.live[known] == (self.observed[known] == LIVE)))

    def __repr__(self):
        return (f"PartialRealization(dom={self.dom}, observed={int((self.observed >= 0).sum())}, "
                f"accepted={int(self.accepted.sum())})")


World = Union[FullRealization, np.random.Generator]


def observe(partial: PartialRealization, new_seed: int, world: World,
            ) -> tuple[PartialRealization, np.ndarray]:
    """Seed ``new_seed`` and observe its cascade under full-adoption feedback.

    ``world`` is either a fixed FullRealization or a Generator, in which case
    each newly exposed edge is sampled once, when its tail is first reached.
    Returns the new partial realization (the input is left untouched) and
    the newly infected feature nodes other than the seed's own.
    """
    mlg = partial.mlg
    new_seed = int(new_seed)
    if new_seed in partial.dom:
        raise ValueError(f"node {new_seed} is already a seed")
    if not 0 <= new_seed < mlg.n:
        raise IndexError(f"no node {new_seed}")
    observed = partial.observed.copy()
    accepted = partial.accepted.copy()
    fixed = isinstance(world, FullRealization)
    own = set()
    queue = deque()
    for f in mlg.feature_nodes_of(new_seed):
        f = int(f)
        if not accepted[f]:
            accepted[f] = True
            own.add(f)
            queue.append(f)
    infected = []
    while queue:
        f = queue.popleft()
        if f not in own:
            infected.append(f)
        for e in mlg.out_edge[mlg.out_ptr[f]:mlg.out_ptr[f + 1]]:
            if observed[e] == UNKNOWN:
                live = world.live[e] if fixed else world.random() < mlg.prob[e]
                observed[e] = LIVE if live else BLOCKED
            h = mlg.head[e]
            if observed[e] == LIVE and not accepted[h]:
                accepted[h] = True
                queue.append(int(h))
    updated = PartialRealization(mlg, observed, partial.dom + (new_seed,), accepted)
    return updated, np.asarray(sorted(infected), dtype=np.int64)
