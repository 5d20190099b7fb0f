"""Seed-selection policies.

Non-adaptive: modified greedy (cost-effectiveness greedy with a final coin
flip on the overflowing node) driven by a Monte-Carlo or RIS estimator.
Adaptive: adaptive greedy (Monte-Carlo marginals), sampled adaptive greedy
(MEPIC), and the AR / AMD / AMP heuristics. Every adaptive policy shares
one loop: pick, coin-flip if over budget, seed, observe, shrink the
residual graph.

Randomness: each policy splits its ``rng`` into a selection stream, a coin
stream and (when no fixed world is supplied) an environment stream. The
selection stream is consumed the same way whatever the budget, so runs at
different budgets share their prefix.
"""

from __future__ import annotations

import copy
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .diffusion import (FullRealization, PartialRealization, ResidualGraph, diffuse, kernel_seed,
                        observe, profit, sample_realization)
from .estimation import (DEFAULT_SAMPLE_CAP, RRCollection, SampleCapWarning, apply_cap,
                         chernoff_alpha, chernoff_lambda, coverage_counts, q_star,
                         sample_rr_collection)
from .network import MultiLevelGraph, SocialNetwork, build_multi_level, feature_mass

EXPECTED, DETERMINISTIC = "expected", "deterministic"
POLICY_NAMES = ("MGMC", "MGRIS", "AG", "SAG", "AR", "AMD", "AMP")


@dataclass(frozen=True)
class TraceStep:
    node: int
    estimate: float
    cumulative_cost: float
    coin: Optional[bool] = None  # None when no coin flip was needed


@dataclass(frozen=True)
class PolicyResult:
    policy: str
    seeds: tuple
    total_cost: float
    realized_profit: float
    estimated_profit: float
    trace: tuple
    wallclock: float
    samples_used: int = 0
    capped: bool = False


def _check_budget(budget: float):
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")


def _streams(rng: np.random.Generator):
    seeds = rng.integers(0, 2**63 - 1, size=3)
    return tuple(np.random.default_rng(int(s)) for s in seeds)


def _keep_overflow(budget, spent, c, coin_rng, knapsack) -> bool:
    if knapsack == DETERMINISTIC:
        return False
    return bool(coin_rng.random() < (budget - spent) / c)


def _argmax_first(values: np.ndarray) -> int:
    # np.argmax returns the first maximum; candidates are in ascending id order
    return int(np.argmax(values))


# ---------------------------------------------------------------- non-adaptive

class MCEstimator:
    """P(S) by Monte-Carlo over ``sims`` worlds sampled once per run.

    Reusing the same worlds for every marginal (common random numbers) keeps
    the estimated objective monotone and submodular.
    """

    def __init__(self, sims: int = 500):
        if sims < 1:
            raise ValueError("sims must be >= 1")
        self.sims = sims

    def prepare(self, net, mlg, budget, rng):
        return _MCTracker(net, mlg, self.sims, rng)


class _MCTracker:
    def __init__(self, net, mlg, sims, rng):
        self.net, self.mlg = net, mlg
        self.live = rng.random((sims, mlg.num_edges)) < mlg.prob
        self.reached = np.zeros((sims, mlg.num_nodes), dtype=bool)
        self.mass = feature_mass(net)
        self.samples = sims
        self.capped = False
        self._value = 0.0

    def marginals(self, candidates):
        m = self.mlg
        return _kernels.snapshot_marginals(candidates.astype(np.int64), m.n, m.q, self.live,
                                           self.reached, m.out_ptr, m.out_edge, m.head,
                                           self.mass)

    def add(self, v):
        m = self.mlg
        self._value += _kernels.snapshot_commit(m.feature_nodes_of(v), self.live, self.reached,
                                                m.out_ptr, m.out_edge, m.head, self.mass)

    def value(self):
        return self._value


class RISEstimator:
    """P(S) ≈ Q·F_R(S) from one shared collection of λ RR sets on the full graph."""

    def __init__(self, eta: float = 0.1, delta_prime: float = 0.1,
                 cap: int = DEFAULT_SAMPLE_CAP, num_sets: Optional[int] = None):
        self.eta, self.delta_prime, self.cap = eta, delta_prime, cap
        self.num_sets = num_sets

    def sample_size(self, net, budget) -> int:
        if self.num_sets is not None:
            return self.num_sets
        return chernoff_lambda(float(net.profit.sum()), q_star(net, budget), self.eta,
                               self.delta_prime)

    def prepare(self, net, mlg, budget, rng):
        lam, capped = apply_cap(self.sample_size(net, budget), self.cap, "lambda")
        res = ResidualGraph.full(net, mlg)
        coll = sample_rr_collection(res, max(lam, 1), rng)
        return _RISTracker(net, coll, capped)


class _RISTracker:
    def __init__(self, net, coll: RRCollection, capped):
        self.net, self.coll = net, coll
        self.Q = coll.W
        self.counts = coll.user_counts().copy()
        self.covered = np.zeros(len(coll), dtype=bool)
        self.n_covered = 0
        self.samples = len(coll)
        self.capped = capped

    def marginals(self, candidates):
        return self.Q * self.counts[candidates] / len(self.coll)

    def add(self, v):
        c = self.coll
        self.n_covered += _kernels.cover_user(int(v), c.user_ptr, c.user_rr, c.offsets, c.members,
                                              c.n, self.covered, self.counts)

    def value(self):
        return self.Q * self.n_covered / len(self.coll)


def modified_greedy(net: SocialNetwork, budget: float, estimator, rng: np.random.Generator,
                    world: Optional[FullRealization] = None, mlg: Optional[MultiLevelGraph] = None,
                    knapsack: str = EXPECTED, name: str = "MG") -> PolicyResult:
    """Non-adaptive greedy on estimated marginal profit per unit cost.

    The realized profit is measured on ``world`` (sampled if not given).
    """
    _check_budget(budget)
    t0 = time.perf_counter()
    mlg = mlg if mlg is not None else build_multi_level(net)
    select_rng, coin_rng, env_rng = _streams(rng)
    tracker = estimator.prepare(net, mlg, budget, select_rng)
    selected = np.zeros(net.n, dtype=bool)
    seeds, trace = [], []
    spent = 0.0
    while spent < budget and not selected.all():
        cand = np.flatnonzero(~selected)
        gains = tracker.marginals(cand)
        j = _argmax_first(gains / net.cost[cand])
        v, gain = int(cand[j]), float(gains[j])
        if gain <= 0:
            break
        coin = None
        if spent + net.cost[v] > budget:
            coin = _keep_overflow(budget, spent, net.cost[v], coin_rng, knapsack)
            if not coin:
                trace.append(TraceStep(v, gain, spent, False))
                break
        seeds.append(v)
        selected[v] = True
        spent += net.cost[v]
        tracker.add(v)
        trace.append(TraceStep(v, gain, spent, coin))
    if world is None:
        world = sample_realization(mlg, env_rng)
    realized = profit(net, diffuse(mlg, world, seeds))
    return PolicyResult(name, tuple(seeds), float(net.cost[seeds].sum()) if seeds else 0.0,
                        realized, float(tracker.value()), tuple(trace),
                        time.perf_counter() - t0, tracker.samples, tracker.capped)


# -------------------------------------------------------------------- adaptive

@dataclass
class Choice:
    node: Optional[int]
    estimate: float = math.nan
    samples: int = 0
    capped: bool = False


Chooser = Callable[[PartialRealization, ResidualGraph, np.ndarray, np.random.Generator], Choice]


def _budget_list(budgets) -> list:
    out = sorted(set(float(b) for b in np.atleast_1d(budgets)))
    if not out:
        raise ValueError("no budgets given")
    for b in out:
        _check_budget(b)
    return out


def adaptive_sweep(name: str, net: SocialNetwork, mlg: MultiLevelGraph, budgets,
                   choose: Chooser, rng: np.random.Generator,
                   world: Optional[FullRealization] = None,
                   knapsack: str = EXPECTED) -> dict:
    """Run an adaptive policy for several budgets in one pass.

    Choices never look at the budget, only the stopping point does, and each
    run flips at most one coin (the first draw of its coin stream). So the
    result for every budget equals a standalone run with the same ``rng``.
    Returns {budget: PolicyResult}.
    """
    open_budgets = _budget_list(budgets)
    t0 = time.perf_counter()
    select_rng, coin_rng, env_rng = _streams(rng)
    coin_draw = coin_rng.random()
    env = world if world is not None else env_rng
    partial = PartialRealization.empty(mlg)
    res = ResidualGraph.full(net, mlg)
    selected = np.zeros(net.n, dtype=bool)
    seeds, trace = [], []
    spent, est_total, samples, capped_steps, steps = 0.0, 0.0, 0, 0, 0
    results = {}

    def close(b, est, last=None):
        recorded = tuple(trace) + ((last,) if last is not None else ())
        results[b] = PolicyResult(name, tuple(seeds),
                                  float(net.cost[seeds].sum()) if seeds else 0.0,
                                  profit(net, partial.accepted), est, recorded,
                                  time.perf_counter() - t0, samples, capped_steps > 0)

    while open_budgets:
        if selected.all():
            break
        while open_budgets and spent >= open_budgets[0]:
            close(open_budgets.pop(0), est_total)
        if not open_budgets:
            break
        choice = choose(partial, res, np.flatnonzero(~selected), select_rng)
        samples += choice.samples
        capped_steps += choice.capped
        steps += 1
        if choice.node is None:
            break
        v = int(choice.node)
        c = float(net.cost[v])
        kept = []
        for b in [b for b in open_budgets if spent + c > b]:
            keep = knapsack == EXPECTED and coin_draw < (b - spent) / c
            if keep:
                kept.append(b)
            else:
                close(b, est_total, TraceStep(v, choice.estimate, spent, False))
            open_budgets.remove(b)
        if not kept and not open_budgets:
            break
        seeds.append(v)
        selected[v] = True
        spent += c
        est_total += choice.estimate
        partial, _ = observe(partial, v, env)
        res = res.without(np.flatnonzero(res.alive & partial.accepted))
        for b in kept:
            close(b, est_total, TraceStep(v, choice.estimate, spent, True))
        trace.append(TraceStep(v, choice.estimate, spent, None))
    for b in open_budgets:
        close(b, est_total)
    if capped_steps:
        warnings.warn(f"{name}: sample cap hit in {capped_steps} of {steps} selection steps",
                      SampleCapWarning, stacklevel=2)
    return results


def adaptive_loop(name, net, mlg, budget, choose, rng, world=None, knapsack=EXPECTED):
    _check_budget(budget)
    return adaptive_sweep(name, net, mlg, [budget], choose, rng, world, knapsack)[float(budget)]


def greedy_chooser(net, mlg, mc_sims) -> Chooser:
    """Adaptive greedy step: Δ(v|φ) from ``mc_sims`` cascades per candidate on
    the residual graph, argmax of Δ/c."""
    if mc_sims < 1:
        raise ValueError("mc_sims must be >= 1")
    mass = feature_mass(net)

    def choose(partial, res, cand, srng):
        if res.empty:
            return Choice(None)
        est = _kernels.mc_marginals(kernel_seed(srng), mc_sims, cand.astype(np.int64), mlg.n,
                                    mlg.q, mlg.out_ptr, mlg.out_edge, mlg.head, mlg.prob,
                                    res.alive, mass)
        j = _argmax_first(est / net.cost[cand])
        if est[j] <= 0:
            return Choice(None, 0.0, mc_sims * len(cand))
        return Choice(int(cand[j]), float(est[j]), mc_sims * len(cand))

    return choose


def adaptive_greedy(net, mlg, budget, mc_sims, rng, world=None, knapsack=EXPECTED) -> PolicyResult:
    return adaptive_loop("AG", net, mlg, budget, greedy_chooser(net, mlg, mc_sims), rng, world,
                         knapsack)


@dataclass(frozen=True)
class MepicParams:
    eps: float
    delta: float
    eps_prime: float
    eps_bar: float
    i_max: int
    a: float
    theta0: int

    @classmethod
    def compute(cls, eps: float, W: float, W_star: float, n_phi: int) -> "MepicParams":
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if W <= 0 or W_star <= 0:
            raise ValueError("W and W* must be positive")
        delta = 0.01 * eps / W
        eps_prime = (eps - delta * W) / (1 - delta * W)
        eps_bar = eps_prime / (1 - eps_prime)
        i_max = math.ceil(math.log2((2 + 2 * eps_bar / 3) * W / eps_bar ** 2)) + 1
        i_max = max(i_max, 1)
        a = math.log(2 * i_max / delta)
        theta0 = math.ceil((math.log(2 / delta) + math.log(n_phi)) / W_star)
        return cls(eps, delta, eps_prime, eps_bar, i_max, a, max(theta0, 1))


@dataclass(frozen=True)
class MepicOutcome:
    node: int
    q_upper: float
    q_lower: float
    coverage: float  # F_R1 of the returned node
    rounds: int
    rr_sets: int  # across both collections
    stop: str  # "ratio", "i_max" or "cap"
    params: MepicParams = field(repr=False, default=None)


def mepic(res: ResidualGraph, candidates, W: float, W_star: float, n_phi: int, eps: float,
          rng: np.random.Generator, cap: int = DEFAULT_SAMPLE_CAP,
          warn: bool = True) -> MepicOutcome:
    """Near-argmax of Δ(v|φ)/c(v) over ``candidates`` by doubling two RR collections."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size == 0:
        raise ValueError("no candidates")
    prm = MepicParams.compute(eps, W, W_star, n_phi)
    cost = res.net.cost[cand]
    size, capped = apply_cap(prm.theta0, cap, "MEPIC theta0", warn)
    c1 = coverage_counts(res, size, rng)
    c2 = coverage_counts(res, size, rng)
    a = prm.a
    for i in range(1, prm.i_max + 1):
        q1 = c1[cand] / size / cost
        j = _argmax_first(q1)
        v = int(cand[j])
        q_up = float(q1[j])
        q2 = c2[v] / size / res.net.cost[v]
        q_lo = (math.sqrt(q2 + 2 * a / (9 * size)) - math.sqrt(a / (2 * size))) ** 2 \
            - a / (18 * size)
        out = dict(node=v, q_upper=q_up, q_lower=q_lo, coverage=c1[v] / size, rounds=i,
                   rr_sets=2 * size, params=prm)
        if q_up > 0 and q_lo / q_up >= 1 - prm.eps_prime:
            return MepicOutcome(stop="ratio", **out)
        if i == prm.i_max:
            return MepicOutcome(stop="i_max", **out)
        if capped or 2 * size > cap:
            if not capped:
                apply_cap(2 * size, cap, "MEPIC doubling", warn)
            return MepicOutcome(stop="cap", **out)
        c1 = c1 + coverage_counts(res, size, rng)
        c2 = c2 + coverage_counts(res, size, rng)
        size *= 2
    raise AssertionError("unreachable")


def sampled_chooser(eps, cap=DEFAULT_SAMPLE_CAP) -> Chooser:
    """SAG step: MEPIC on the current residual graph with fresh RR sets."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")

    def choose(partial, res, cand, srng):
        if res.empty:
            return Choice(None)
        out = mepic(res, cand, res.W, res.W_star, len(cand), eps, srng, cap, warn=False)
        est = res.W * out.coverage
        if est <= 0:
            return Choice(None, 0.0, out.rr_sets)
        return Choice(out.node, est, out.rr_sets, out.stop == "cap")

    return choose


def random_chooser() -> Chooser:
    def choose(partial, res, cand, srng):
        return Choice(int(cand[srng.integers(len(cand))]))

    return choose


def degree_chooser(net) -> Chooser:
    """Largest out-degree in the base graph first, ties by smaller id."""
    order = np.lexsort((np.arange(net.n), -net.out_degree()))
    rank = np.empty(net.n, dtype=np.int64)
    rank[order] = np.arange(net.n)

    def choose(partial, res, cand, srng):
        return Choice(int(cand[np.argmin(rank[cand])]))

    return choose


def max_profit_chooser(eps_hat=0.1, delta_prime=0.1, cap=DEFAULT_SAMPLE_CAP) -> Chooser:
    """Argmax of ρ(u|φ) (profit, not profit per cost) with α fresh RR sets per step."""

    def choose(partial, res, cand, srng):
        if res.empty:
            return Choice(None)
        alpha, capped = apply_cap(chernoff_alpha(res.W, res.W_star, eps_hat, delta_prime), cap,
                                  "alpha",
                                  warn=False)
        alpha = max(alpha, 1)
        counts = coverage_counts(res, alpha, srng)
        rho = res.W * counts[cand] / alpha
        j = _argmax_first(rho)
        if rho[j] <= 0:
            return Choice(None, 0.0, alpha, capped)
        return Choice(int(cand[j]), float(rho[j]), alpha, capped)

    return choose


def sampled_adap_greedy(net, mlg, budget, eps, rng, world=None, knapsack=EXPECTED,
                        cap=DEFAULT_SAMPLE_CAP) -> PolicyResult:
    return adaptive_loop("SAG", net, mlg, budget, sampled_chooser(eps, cap), rng, world, knapsack)


def heuristic_ar(net, mlg, budget, rng, world=None, knapsack=EXPECTED) -> PolicyResult:
    return adaptive_loop("AR", net, mlg, budget, random_chooser(), rng, world, knapsack)


def heuristic_amd(net, mlg, budget, rng, world=None, knapsack=EXPECTED) -> PolicyResult:
    return adaptive_loop("AMD", net, mlg, budget, degree_chooser(net), rng, world, knapsack)


def heuristic_amp(net, mlg, budget, rng, world=None, knapsack=EXPECTED, eps_hat=0.1,
                  delta_prime=0.1, cap=DEFAULT_SAMPLE_CAP) -> PolicyResult:
    return adaptive_loop("AMP", net, mlg, budget, max_profit_chooser(eps_hat, delta_prime, cap),
                         rng, world, knapsack)


@dataclass(frozen=True)
class PolicyParams:
    eps: float = 0.5
    eta: float = 0.1
    delta_prime: float = 0.1
    eps_hat: float = 0.1
    mc_sims: int = 500
    rr_cap: int = DEFAULT_SAMPLE_CAP
    knapsack: str = EXPECTED


def _chooser(name, net, mlg, p: PolicyParams) -> Chooser:
    if name == "AG":
        return greedy_chooser(net, mlg, p.mc_sims)
    if name == "SAG":
        return sampled_chooser(p.eps, p.rr_cap)
    if name == "AR":
        return random_chooser()
    if name == "AMD":
        return degree_chooser(net)
    if name == "AMP":
        return max_profit_chooser(p.eps_hat, p.delta_prime, p.rr_cap)
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")


def _estimator(name, p: PolicyParams):
    if name == "MGMC":
        return MCEstimator(p.mc_sims)
    return RISEstimator(p.eta, p.delta_prime, p.rr_cap)


def run_policy_sweep(name: str, net: SocialNetwork, mlg: MultiLevelGraph, budgets,
                     rng: np.random.Generator, world: Optional[FullRealization] = None,
                     params: PolicyParams = PolicyParams()) -> dict:
    """{budget: PolicyResult}, each equal to ``run_policy`` at that budget with
    the same starting ``rng``."""
    if name in ("MGMC", "MGRIS"):
        # the RIS sample size depends on the budget, so no shared pass
        est = _estimator(name, params)
        return {b: modified_greedy(net, b, est, copy.deepcopy(rng), world, mlg, params.knapsack,
                                   name) for b in _budget_list(budgets)}
    return adaptive_sweep(name, net, mlg, budgets, _chooser(name, net, mlg, params), rng, world,
                          params.knapsack)


def run_policy(name: str, net: SocialNetwork, mlg: MultiLevelGraph, budget: float,
               rng: np.random.Generator, world: Optional[FullRealization] = None,
               params: PolicyParams = PolicyParams()) -> PolicyResult:
    _check_budget(budget)
    return run_policy_sweep(name, net, mlg, [budget], rng, world, params)[float(budget)]
