import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import small_networks
from mfpm.diffusion import PartialRealization, ResidualGraph, observe
from mfpm.estimation import (RRCollection, SampleCapWarning, apply_cap, chernoff_alpha,
                             chernoff_lambda, coverage_counts, coverage_F, coverage_of_features,
                             q_star, ratio_Q, rho, sample_rr_collection, sample_rr_set)
from mfpm.network import SocialNetwork, build_multi_level
from mfpm.oracle import exact_delta


def manual_collection(n, W, sets):
    """sets: list of member lists, target first."""
    offsets = np.cumsum([0] + [len(s) for s in sets])
    return RRCollection(n, W, [s[0] for s in sets], offsets, [x for s in sets for x in s])


def test_isolated_target_is_alone():
    net = SocialNetwork.from_edges([], n=3, q=2)
    res = ResidualGraph.full(net, build_multi_level(net))
    coll = sample_rr_collection(res, 200, np.random.default_rng(0))
    for r in range(len(coll)):
        s = coll[r]
        assert s.members == frozenset({s.target})


def test_one_edge_rr_members(one_edge):
    net, mlg = one_edge
    res = ResidualGraph.full(net, mlg)
    coll = sample_rr_collection(res, 40_000, np.random.default_rng(1))
    b_sets = [coll[r].members for r in range(len(coll)) if coll[r].target == 1]
    assert {frozenset({1}), frozenset({0, 1})} == set(b_sets)
    frac = np.mean([len(m) == 2 for m in b_sets])
    assert abs(frac - 0.5) < 0.02
    # sets targeted at a never contain b
    assert all(coll[r].members == {0} for r in range(len(coll)) if coll[r].target == 0)


def test_target_frequency_follows_mass():
    net = SocialNetwork.from_edges([], n=2, q=1, profit=[1.0, 3.0])
    res = ResidualGraph.full(net, build_multi_level(net))
    coll = sample_rr_collection(res, 100_000, np.random.default_rng(2))
    assert abs(np.mean(coll.targets == 1) - 0.75) <= 0.01


def test_single_rr_set(one_edge):
    net, mlg = one_edge
    s = sample_rr_set(ResidualGraph.full(net, mlg), net, np.random.default_rng(0))
    assert s.target in s.members


def test_empty_residual_rejected(chain):
    net, mlg = chain
    partial, _ = observe(PartialRealization.empty(mlg), 0, np.random.default_rng(0))
    res = ResidualGraph.of(net, mlg, partial)
    with pytest.raises(ValueError):
        sample_rr_collection(res, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        coverage_counts(res, 10, np.random.default_rng(0))


def test_collection_validation():
    with pytest.raises(ValueError):
        manual_collection(2, 1.0, [[0, 3]])  # crosses layers
    with pytest.raises(ValueError):
        RRCollection(2, 1.0, [0], [0, 2], [1, 0])  # target not first


def test_coverage_examples():
    # users 0..3, q=1; sets 0..3, user 0 hits sets 1 and 3
    coll = manual_collection(4, 2.0, [[1], [2, 0], [3], [1, 0]])
    assert coverage_F(coll, 0) == 0.5
    assert coverage_F(coll, 2) == 0.25
    empty_user = manual_collection(5, 2.0, [[1], [2]])
    assert coverage_F(empty_user, 4) == 0.0
    all_hit = manual_collection(2, 1.0, [[0], [0, 1], [0]])
    assert coverage_F(all_hit, 0) == 1.0


def test_rho_and_ratio_examples():
    coll = manual_collection(2, 2.0, [[0], [0, 1], [0], [1]])
    net = SocialNetwork.from_edges([(1, 0)], n=2, q=1, cost=[0.5, 1.0])
    assert rho(coll, 0) == pytest.approx(1.5)
    assert ratio_Q(coll, net, 0) == pytest.approx(1.5)  # 0.75 / 0.5
    assert ratio_Q(coll, net, 1) == pytest.approx(0.5)
    none = manual_collection(3, 2.0, [[0], [1]])
    assert rho(none, 2) == 0.0


def test_rho_unbiased_on_one_edge(one_edge):
    net, mlg = one_edge
    res = ResidualGraph.full(net, mlg)
    coll = sample_rr_collection(res, 100_000, np.random.default_rng(3))
    hits = np.zeros(len(coll))
    hits[coll.sets_hit_by_user(0)] = 1
    est, se = coll.W * hits.mean(), coll.W * hits.std(ddof=1) / math.sqrt(len(coll))
    assert abs(est - 1.5) <= 3 * se
    assert exact_delta(net, mlg, PartialRealization.empty(mlg), 0) == pytest.approx(1.5)


def test_chernoff_examples():
    # (2.1 * 10) / (0.01 * 2) * ln 10 = 1050 * 2.302585... = 2417.71
    assert chernoff_lambda(10, 2, 0.1, 0.1) == 2418
    assert chernoff_lambda(5, 5, 0.1, 0.1) == math.ceil(2.1 / 0.01 * math.log(10))
    assert chernoff_lambda(10, 2, 0.1, 1.0) == 0
    assert chernoff_alpha(10, 2, 0.1, 0.1) == 2418
    assert chernoff_alpha(3, 3, 0.1, 0.1) == 484
    with pytest.raises(ValueError):
        chernoff_lambda(10, 0, 0.1, 0.1)
    with pytest.raises(ValueError):
        chernoff_alpha(10, 1, 1.5, 0.1)


def test_q_star_tail():
    net = SocialNetwork.from_edges([], n=4, q=1, cost=[0.1, 0.4, 0.2, 0.8],
                                   profit=[1.0, 2.0, 3.0, 4.0])
    # ascending cost: 0(0.1) 2(0.2) 1(0.4) 3(0.8); tails: 0.8, 1.2, 1.4, 1.5
    assert q_star(net, 1.3) == 6.0
    assert q_star(net, 0.8) == 4.0
    assert q_star(net, 10) == 10.0
    assert q_star(net, 0.5) == 1.0  # nothing fits: smallest profit


def test_apply_cap_warns():
    with pytest.warns(SampleCapWarning):
        assert apply_cap(50, 10, "x") == (10, True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert apply_cap(5, 10) == (5, False)
        assert apply_cap(50, 10, warn=False) == (10, True)


@settings(max_examples=40, deadline=None)
@given(small_networks(max_n=6, max_q=3, max_edges=18), st.integers(0, 2**32 - 1))
def test_counts_kernel_matches_materialized_sets(inst, seed):
    net, mlg = inst
    res = ResidualGraph.full(net, mlg)
    coll = sample_rr_collection(res, 300, np.random.default_rng(seed))
    counts = coverage_counts(res, 300, np.random.default_rng(seed))
    assert np.array_equal(counts, coll.user_counts())


@settings(max_examples=40, deadline=None)
@given(small_networks(max_n=6, max_q=3, max_edges=18), st.integers(0, 2**32 - 1))
def test_inverted_index_matches_scan(inst, seed):
    net, mlg = inst
    coll = sample_rr_collection(ResidualGraph.full(net, mlg), 200, np.random.default_rng(seed))
    for u in range(net.n):
        feats = set(mlg.feature_nodes_of(u).tolist())
        naive = sum(bool(coll[r].members & feats) for r in range(len(coll))) / len(coll)
        assert coverage_F(coll, u) == naive
        assert coverage_of_features(coll, feats) == naive


@settings(max_examples=40, deadline=None)
@given(small_networks(max_n=6, max_q=3, max_edges=18), st.integers(0, 2**32 - 1))
def test_coverage_monotone_in_query(inst, seed):
    net, mlg = inst
    rng = np.random.default_rng(seed)
    coll = sample_rr_collection(ResidualGraph.full(net, mlg), 200, rng)
    query = []
    last = 0.0
    for f in rng.permutation(mlg.num_nodes):
        query.append(int(f))
        cur = coverage_of_features(coll, query)
        assert cur >= last
        last = cur
    assert last == 1.0


def test_unbiased_on_three_node_instances():
    rng = np.random.default_rng(17)
    net = SocialNetwork.from_edges([(0, 1), (1, 2), (0, 2)], n=3, q=2,
                                   prob=rng.uniform(0.2, 0.9, (3, 2)),
                                   profit=[0.4, 0.9, 0.7],
                                   weights=[[0.2, 0.8], [0.6, 0.4], [0.5, 0.5]])
    mlg = build_multi_level(net)
    partial, _ = observe(PartialRealization.empty(mlg), 1, rng)
    res = ResidualGraph.of(net, mlg, partial)
    coll = sample_rr_collection(res, 100_000, rng)
    for u in (0, 2):
        hits = np.zeros(len(coll))
        hits[coll.sets_hit_by_user(u)] = 1
        se = coll.W * hits.std(ddof=1) / math.sqrt(len(coll))
        assert abs(coll.W * hits.mean() - exact_delta(net, mlg, partial, u)) <= 3 * se + 1e-12
