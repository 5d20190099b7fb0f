"""Reverse-reachable sets on residual graphs and the sample-size formulas."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .diffusion import ResidualGraph, kernel_seed
from .network import SocialNetwork

DEFAULT_SAMPLE_CAP = 10_000_000


class SampleCapWarning(RuntimeWarning):
    pass


def apply_cap(count: int, cap: int = DEFAULT_SAMPLE_CAP, what: str = "sample count",
              warn: bool = True):
    """Clamp a computed sample count; returns (count, was_capped)."""
    if count > cap:
        if warn:
            warnings.warn(f"{what} {count} exceeds cap {cap}; using {cap}",
                          SampleCapWarning, stacklevel=3)
        return cap, True
    return count, False


@dataclass(frozen=True)
class RRSet:
    target: int
    members: frozenset

    def __post_init__(self):
        assert self.target in self.members


class RRCollection:
    """RR sets stored flat, with a user -> RR-set inverted index.

    Set ``r`` has members ``members[offsets[r]:offsets[r+1]]`` (flat feature
    ids, target first). Every set lives in a single layer, so a user occurs
    at most once per set.
    """

    def __init__(self, n: int, W: float, targets, offsets, members):
        self.n = n
        self.W = float(W)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.members = np.asarray(members, dtype=np.int64)
        users = self.members % n
        set_of = np.repeat(np.arange(len(self.targets), dtype=np.int64), np.diff(self.offsets))
        if np.any(self.members // n != self.targets[set_of] // n):
            raise ValueError("an RR set must stay within its target's layer")
        if np.any(self.members[self.offsets[:-1][np.diff(self.offsets) > 0]]
                  != self.targets[np.diff(self.offsets) > 0]) or np.any(np.diff(self.offsets) < 1):
            raise ValueError("every RR set must list its target first")
        order = np.lexsort((set_of, users))
        self.user_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(users, minlength=n), out=self.user_ptr[1:])
        self.user_rr = set_of[order]

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, r: int) -> RRSet:
        mem = self.members[self.offsets[r]:self.offsets[r + 1]]
        return RRSet(int(self.targets[r]), frozenset(int(x) for x in mem))

    def sets_hit_by_user(self, u: int) -> np.ndarray:
        return self.user_rr[self.user_ptr[u]:self.user_ptr[u + 1]]

    def user_counts(self) -> np.ndarray:
        return np.diff(self.user_ptr)


def _check_residual(res: ResidualGraph):
    if res.empty:
        raise ValueError("residual graph has no feature node with positive mass")


def sample_rr_collection(res: ResidualGraph, count: int, rng: np.random.Generator) -> RRCollection:
    _check_residual(res)
    mlg = res.mlg
    cum, last = res.cumulative_mass()
    targets, offsets, members = _kernels.rr_sets(
        kernel_seed(rng), int(count), cum, last, mlg.in_ptr, mlg.in_edge, mlg.tail, mlg.prob,
        res.alive)
    return RRCollection(mlg.n, res.W, targets, offsets, members)


def sample_rr_set(res: ResidualGraph, net: SocialNetwork, rng: np.random.Generator) -> RRSet:
    """One random RR set; the target is drawn with probability b(v)·w_v^i / W."""
    return sample_rr_collection(res, 1, rng)[0]


def coverage_counts(res: ResidualGraph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Per-user hit counts over ``count`` fresh RR sets, without storing them."""
    _check_residual(res)
    mlg = res.mlg
    cum, last = res.cumulative_mass()
    return _kernels.rr_counts(kernel_seed(rng), int(count), mlg.n, cum, last, mlg.in_ptr,
                              mlg.in_edge, mlg.tail, mlg.prob, res.alive)


def coverage_F(coll: RRCollection, u: int) -> float:
    if len(coll) == 0:
        raise ValueError("empty RR collection")
    return len(coll.sets_hit_by_user(u)) / len(coll)


def coverage_of_features(coll: RRCollection, features) -> float:
    """Fraction of RR sets containing at least one of the given feature nodes."""
    if len(coll) == 0:
        raise ValueError("empty RR collection")
    hit = np.isin(coll.members, np.asarray(list(features), dtype=np.int64))
    set_of = np.repeat(np.arange(len(coll)), np.diff(coll.offsets))
    return len(np.unique(set_of[hit])) / len(coll)


def rho(coll: RRCollection, u: int) -> float:
    """W·F(u): unbiased estimate of the conditional expected marginal profit."""
    return coll.W * coverage_F(coll, u)


def ratio_Q(coll: RRCollection, net: SocialNetwork, u: int) -> float:
    return coverage_F(coll, u) / net.cost[u]


def _chernoff(total: float, floor: float, err: float, delta_prime: float) -> int:
    if floor <= 0:
        raise ValueError("lower bound must be positive")
    if not (0 < err < 1 and 0 < delta_prime <= 1):
        raise ValueError("error parameters must lie in (0, 1)")
    value = (2 + err) * total / (err ** 2 * floor) * math.log(1 / delta_prime)
    return max(int(math.ceil(value - 1e-9)), 0)


def chernoff_lambda(Q_total: float, Q_star: float, eta: float, delta_prime: float) -> int:
    """Number of RR sets for the non-adaptive RIS greedy."""
    return _chernoff(Q_total, Q_star, eta, delta_prime)


def chernoff_alpha(W: float, W_star: float, eps_hat: float, delta_prime: float) -> int:
    """Number of RR sets per step for the adaptive max-profit heuristic."""
    return _chernoff(W, W_star, eps_hat, delta_prime)


def q_star(net: SocialNetwork, budget: float) -> float:
    """Profit of the costliest tail of nodes (ascending cost order) that fits in
    the budget; falls back to min b(v) when not even one node fits."""
    order = np.argsort(net.cost, kind="stable")
    tail_cost = np.cumsum(net.cost[order][::-1])
    fits = int(np.searchsorted(tail_cost, budget, side="right"))
    if fits == 0:
        return float(net.profit.min())
    return float(net.profit[order][::-1][:fits].sum())
