"""Social network container, edge-list ingestion and the multi-level graph.

Feature nodes of the multi-level graph are addressed by a flat integer id
``layer * n + user`` with ``layer`` 0-based; :class:`FeatureNode` is the
1-based public view of the same thing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9
MIN_DRAW = 1e-12


class NetworkFormatError(ValueError):
    """Raised for unreadable edge lists or inconsistent network data."""


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise NetworkFormatError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_range(text: str) -> tuple[float, float]:
    parts = [p for p in text.replace("(", " ").replace(")", " ").replace("]", " ")
             .replace("[", " ").replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected a pair 'lo, hi', got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if not 0.0 <= lo < hi:
        raise ValueError(f"bad range ({lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class ParamConfig:
    """How parameters are synthesized for a loaded graph.

    Costs and profits are drawn from the half-open interval ``(lo, hi]``.
    """

    q: int = 3
    directed: bool = True
    rng_seed: int = 0
    cost_range: tuple[float, float] = (0.0, 1.0)
    profit_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be a positive integer")

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "ParamConfig":
        kwargs = {}
        if "q" in kv:
            kwargs["q"] = int(kv["q"])
        if "directed" in kv:
            kwargs["directed"] = parse_bool(kv["directed"])
        if "rng_seed" in kv:
            kwargs["rng_seed"] = int(kv["rng_seed"])
        if "cost_range" in kv:
            kwargs["cost_range"] = parse_range(kv["cost_range"])
        if "profit_range" in kv:
            kwargs["profit_range"] = parse_range(kv["profit_range"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ParamConfig":
        return cls.from_mapping(parse_kv_file(path))


class FeatureNode(NamedTuple):
    user: int
    feature: int  # 1..q


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class SocialNetwork:
    """Directed graph with per-node cost, profit and feature weights.

    ``prob[j]`` is the q-vector of propagation probabilities of edge
    ``(src[j], dst[j])``. Arrays are read-only after construction.
    """

    def __init__(self, src, dst, prob, cost, profit, weights, labels=None):
        self.src = _frozen(src, np.int64)
        self.dst = _frozen(dst, np.int64)
        self.cost = _frozen(cost, np.float64)
        self.profit = _frozen(profit, np.float64)
        self.weights = _frozen(np.atleast_2d(weights), np.float64)
        n, q = self.weights.shape
        m = self.src.shape[0]
        self.prob = _frozen(np.asarray(prob, dtype=np.float64).reshape(m, q), np.float64)
        self.labels = tuple(str(x) for x in (labels if labels is not None else range(n)))
        self._validate()

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def q(self) -> int:
        return self.weights.shape[1]

    @property
    def m(self) -> int:
        return self.src.shape[0]

    def _validate(self):
        n, m = self.n, self.m
        if n == 0:
            raise NetworkFormatError("empty graph")
        if self.dst.shape != (m,) or self.cost.shape != (n,) or self.profit.shape != (n,):
            raise NetworkFormatError("array shapes do not match node/edge counts")
        if len(self.labels) != n:
            raise NetworkFormatError("label count does not match node count")
        if m and (self.src.min() < 0 or self.dst.min() < 0 or max(self.src.max(), self.dst.max()) >= n):
            raise NetworkFormatError("edge endpoint out of range")
        if np.any(self.src == self.dst):
            raise NetworkFormatError("self-loops are not allowed")
        if len(set(zip(self.src.tolist(), self.dst.tolist()))) != m:
            raise NetworkFormatError("duplicate directed edges")
        if np.any(self.prob <= 0.0) or np.any(self.prob > 1.0):
            raise NetworkFormatError("edge probabilities must lie in (0, 1]")
        if np.any(self.cost <= 0.0):
            raise NetworkFormatError("costs must be strictly positive")
        if np.any(self.profit < 0.0):
            raise NetworkFormatError("profits must be nonnegative")
        if np.any(self.weights <= 0.0) or np.any(self.weights > 1.0):
            raise NetworkFormatError("feature weights must lie in (0, 1]")
        if np.any(np.abs(self.weights.sum(axis=1) - 1.0) > WEIGHT_TOL):
            raise NetworkFormatError("feature weights must sum to 1")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], *, n=None, q=1, prob=1.0,
                   cost=1.0, profit=1.0, weights=None, labels=None) -> "SocialNetwork":
        """Convenience constructor for hand-built networks.

        Scalars broadcast; ``prob`` may be a scalar, a q-vector shared by all
        edges, or an (m, q) array. Weights default to uniform 1/q.
        """
        edges = list(edges)
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        m = len(edges)
        src = [e[0] for e in edges]
        dst = [e[1] for e in edges]
        prob = np.broadcast_to(np.asarray(prob, dtype=float), (m, q))
        if weights is None:
            weights = np.full((n, q), 1.0 / q)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (n, q))
        cost = np.broadcast_to(np.asarray(cost, dtype=float), (n,))
        profit = np.broadcast_to(np.asarray(profit, dtype=float), (n,))
        return cls(src, dst, prob, cost, profit, weights, labels)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n)

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n)

    def __eq__(self, other):
        if not isinstance(other, SocialNetwork):
            return NotImplemented
        return (self.labels == other.labels
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("src", "dst", "prob", "cost", "profit", "weights")))

    __hash__ = None

    def __repr__(self):
        return f"SocialNetwork(n={self.n}, m={self.m}, q={self.q})"


def read_edge_list(path: str | Path) -> tuple[list[tuple[str, str]], int]:
    """Parse a whitespace-separated ``src dst`` file.

    Returns the raw label pairs in file order and the number of self-loops
    dropped.
    """
    pairs = []
    loops = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise NetworkFormatError(f"{path}:{lineno}: expected 'src dst', got {raw.rstrip()!r}")
            if parts[0] == parts[1]:
                loops += 1
                continue
            pairs.append((parts[0], parts[1]))
    return pairs, loops


def synthesize_parameters(n: int, q: int, rng: np.random.Generator,
                          cost_range=(0.0, 1.0), profit_range=(0.0, 1.0)):
    """Draw weights, costs and profits in a fixed order: weights, cost, profit."""
    expo = rng.standard_exponential((n, q))
    expo = np.maximum(expo, MIN_DRAW)
    weights = expo / expo.sum(axis=1, keepdims=True)

    def half_open(lo, hi):
        # 1 - U maps [0, 1) onto (0, 1]
        return np.maximum(lo + (hi - lo) * (1.0 - rng.random(n)), MIN_DRAW)

    cost = half_open(*cost_range)
    profit = half_open(*profit_range)
    return weights, cost, profit


def network_from_pairs(pairs, config: ParamConfig) -> SocialNetwork:
    index: dict[str, int] = {}
    for a, b in pairs:
        for lab in (a, b):
            if lab not in index:
                index[lab] = len(index)
    if not index:
        raise NetworkFormatError("empty graph")
    seen = set()
    src, dst = [], []
    dupes = 0
    for a, b in pairs:
        directions = [(index[a], index[b])]
        if not config.directed:
            directions.append((index[b], index[a]))
        for e in directions:
            if e in seen:
                dupes += 1
                continue
            seen.add(e)
            src.append(e[0])
            dst.append(e[1])
    if dupes:
        log.warning("dropped %d duplicate edges", dupes)
    n = len(index)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    indeg = np.bincount(dst, minlength=n)
    p = 1.0 / indeg[dst]
    prob = np.repeat(p[:, None], config.q, axis=1)
    rng = np.random.default_rng(config.rng_seed)
    weights, cost, profit = synthesize_parameters(n, config.q, rng, config.cost_range,
                                                  config.profit_range)
    labels = sorted(index, key=index.__getitem__)
    return SocialNetwork(src, dst, prob, cost, profit, weights, labels)


def load_network(path: str | Path, config: ParamConfig) -> SocialNetwork:
    """Load an edge list and synthesize the experiment parameters.

    Edge probabilities are ``1/indeg(dst)`` on every feature; undirected
    inputs become two reversed directed edges; node ids are re-indexed
    densely in first-appearance order (original labels kept in ``labels``).
    """
    pairs, loops = read_edge_list(path)
    if loops:
        log.warning("dropped %d self-loops from %s", loops, path)
    if not pairs:
        raise NetworkFormatError(f"{path}: empty graph")
    return network_from_pairs(pairs, config)


def random_edge_list(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform random simple digraph with ``m`` edges (G(n, m) style)."""
    if m > n * (n - 1):
        raise ValueError("too many edges for a simple digraph")
    seen = set()
    out = []
    while len(out) < m:
        a, b = (int(x) for x in rng.integers(0, n, size=2))
        if a == b or (a, b) in seen:
            continue
        seen.add((a, b))
        out.append((a, b))
    return out


def write_edge_list(path: str | Path, edges) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# src dst\n")
        for a, b in edges:
            fh.write(f"{a} {b}\n")


def _csr(keys: np.ndarray, secondary: np.ndarray, size: int):
    order = np.lexsort((secondary, keys))
    ptr = np.zeros(size + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=size), out=ptr[1:])
    return ptr, order.astype(np.int64)


class MultiLevelGraph:
    """q stacked copies of the network, one per feature.

    Edge ``e = layer * m + j`` joins feature nodes ``layer*n + src[j]`` and
    ``layer*n + dst[j]`` with probability ``prob[j, layer]``. Adjacency is
    kept in CSR form sorted by (endpoint, other endpoint) so traversals are
    deterministic.
    """

    def __init__(self, n: int, m: int, q: int, tail, head, prob):
        self.n, self.m, self.q = n, m, q
        self.tail = _frozen(tail, np.int64)
        self.head = _frozen(head, np.int64)
        self.prob = _frozen(prob, np.float64)
        N = n * q
        self.out_ptr, self.out_edge = _csr(self.tail, self.head, N)
        self.in_ptr, self.in_edge = _csr(self.head, self.tail, N)
        for a in (self.out_ptr, self.out_edge, self.in_ptr, self.in_edge):
            a.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.n * self.q

    @property
    def num_edges(self) -> int:
        return self.m * self.q

    def flat(self, user: int, feature: int) -> int:
        if not 1 <= feature <= self.q or not 0 <= user < self.n:
            raise IndexError(f"no feature node ({user}, {feature})")
        return (feature - 1) * self.n + user

    def feature_node(self, flat: int) -> FeatureNode:
        layer, user = divmod(int(flat), self.n)
        return FeatureNode(user, layer + 1)

    def feature_nodes_of(self, user: int) -> np.ndarray:
        return user + self.n * np.arange(self.q, dtype=np.int64)

    def layer_edges(self, feature: int) -> list[tuple[int, int, float]]:
        """Edges of one layer as (tail user, head user, probability)."""
        lo = (feature - 1) * self.m
        return [(int(self.tail[e]) % self.n, int(self.head[e]) % self.n, float(self.prob[e]))
                for e in range(lo, lo + self.m)]

    def __eq__(self, other):
        if not isinstance(other, MultiLevelGraph):
            return NotImplemented
        return ((self.n, self.m, self.q) == (other.n, other.m, other.q)
                and np.array_equal(self.tail, other.tail)
                and np.array_equal(self.head, other.head)
                and np.array_equal(self.prob, other.prob))

    __hash__ = None

    def __repr__(self):
        return f"MultiLevelGraph(nodes={self.num_nodes}, edges={self.num_edges}, q={self.q})"


def build_multi_level(net: SocialNetwork) -> MultiLevelGraph:
    n, m, q = net.n, net.m, net.q
    offsets = np.repeat(np.arange(q, dtype=np.int64) * n, m)
    tail = np.tile(net.src, q) + offsets
    head = np.tile(net.dst, q) + offsets
    prob = net.prob.T.reshape(-1)
    return MultiLevelGraph(n, m, q, tail, head, prob)


def feature_mass(net: SocialNetwork) -> np.ndarray:
    """b(v) * w_v^i for every flat feature node id."""
    return (net.weights * net.profit[:, None]).T.reshape(-1).copy()
