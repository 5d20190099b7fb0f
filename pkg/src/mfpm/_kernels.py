"""Compiled inner loops: cascades and reverse-reachable sets.

Every public kernel takes an explicit ``seed`` and reseeds numba's own
generator with it, so results depend only on the caller's numpy Generator.
Visited sets use an integer tag per traversal instead of clearing arrays.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _spread(sources, out_ptr, out_edge, head, prob, alive, mass, mark, tag, queue):
    # forward cascade over alive nodes, fresh coin per examined edge
    total = 0.0
    qlen = 0
    for j in range(sources.shape[0]):
        f = sources[j]
        if alive[f] and mark[f] != tag:
            mark[f] = tag
            queue[qlen] = f
            qlen += 1
            total += mass[f]
    pos = 0
    while pos < qlen:
        f = queue[pos]
        pos += 1
        for k in range(out_ptr[f], out_ptr[f + 1]):
            e = out_edge[k]
            h = head[e]
            if alive[h] and mark[h] != tag:
                if np.random.random() < prob[e]:
                    mark[h] = tag
                    queue[qlen] = h
                    qlen += 1
                    total += mass[h]
    return total


@njit(cache=True)
def mc_profit(seed, sims, sources, out_ptr, out_edge, head, prob, alive, mass):
    """Sum and sum of squares of cascade mass over ``sims`` fresh worlds."""
    np.random.seed(seed)
    N = alive.shape[0]
    mark = np.zeros(N, np.int64)
    queue = np.empty(N, np.int64)
    s1 = 0.0
    s2 = 0.0
    for s in range(sims):
        x = _spread(sources, out_ptr, out_edge, head, prob, alive, mass, mark, s + 1, queue)
        s1 += x
        s2 += x * x
    return s1, s2


@njit(cache=True)
def mc_marginals(seed, sims, candidates, n, q, out_ptr, out_edge, head, prob, alive, mass):
    """Mean cascade mass from each candidate's alive feature nodes."""
    np.random.seed(seed)
    N = alive.shape[0]
    mark = np.zeros(N, np.int64)
    queue = np.empty(N, np.int64)
    out = np.zeros(candidates.shape[0])
    src = np.empty(q, np.int64)
    tag = 0
    for c in range(candidates.shape[0]):
        u = candidates[c]
        k = 0
        for i in range(q):
            f = i * n + u
            if alive[f]:
                src[k] = f
                k += 1
        if k == 0:
            continue
        acc = 0.0
        for s in range(sims):
            tag += 1
            acc += _spread(src[:k], out_ptr, out_edge, head, prob, alive, mass, mark, tag, queue)
        out[c] = acc / sims
    return out


@njit(cache=True)
def _reverse(target, in_ptr, in_edge, tail, prob, alive, mark, tag, queue):
    mark[target] = tag
    queue[0] = target
    qlen = 1
    pos = 0
    while pos < qlen:
        f = queue[pos]
        pos += 1
        for k in range(in_ptr[f], in_ptr[f + 1]):
            e = in_edge[k]
            t = tail[e]
            if alive[t] and mark[t] != tag:
                if np.random.random() < prob[e]:
                    mark[t] = tag
                    queue[qlen] = t
                    qlen += 1
    return qlen


@njit(cache=True)
def _draw_target(cum, last):
    x = np.random.random() * cum[last]
    t = np.searchsorted(cum, x, side="right")
    if t > last:
        t = last
    return t


@njit(cache=True)
def rr_counts(seed, count, n, cum, last, in_ptr, in_edge, tail, prob, alive):
    """Per-user number of RR sets (out of ``count``) containing a feature node of that user."""
    np.random.seed(seed)
    N = alive.shape[0]
    mark = np.zeros(N, np.int64)
    queue = np.empty(N, np.int64)
    counts = np.zeros(n, np.int64)
    for r in range(count):
        t = _draw_target(cum, last)
        size = _reverse(t, in_ptr, in_edge, tail, prob, alive, mark, r + 1, queue)
        # one layer per RR set, so users are distinct within it
        for j in range(size):
            counts[queue[j] % n] += 1
    return counts


@njit(cache=True)
def rr_sets(seed, count, cum, last, in_ptr, in_edge, tail, prob, alive):
    """Materialize ``count`` RR sets as (targets, offsets, members); members of a
    set start with its target."""
    np.random.seed(seed)
    N = alive.shape[0]
    mark = np.zeros(N, np.int64)
    queue = np.empty(N, np.int64)
    targets = np.empty(count, np.int64)
    offsets = np.zeros(count + 1, np.int64)
    members = np.empty(max(16, 4 * count), np.int64)
    used = 0
    for r in range(count):
        t = _draw_target(cum, last)
        targets[r] = t
        size = _reverse(t, in_ptr, in_edge, tail, prob, alive, mark, r + 1, queue)
        if used + size > members.shape[0]:
            grown = np.empty(max(2 * members.shape[0], used + size), np.int64)
            grown[:used] = members[:used]
            members = grown
        members[used:used + size] = queue[:size]
        used += size
        offsets[r + 1] = used
    return targets, offsets, members[:used].copy()


@njit(cache=True)
def cover_user(user, user_ptr, user_rr, offsets, members, n, covered, counts):
    """Mark every uncovered RR set hit by ``user`` as covered and decrement the
    per-user counts of its members; returns how many sets became covered."""
    gained = 0
    for k in range(user_ptr[user], user_ptr[user + 1]):
        r = user_rr[k]
        if not covered[r]:
            covered[r] = True
            gained += 1
            for j in range(offsets[r], offsets[r + 1]):
                counts[members[j] % n] -= 1
    return gained


@njit(cache=True)
def _snapshot_gain(k, sources, live, reached, out_ptr, out_edge, head, mass, mark, tag,
                   queue, commit):
    total = 0.0
    qlen = 0
    for j in range(sources.shape[0]):
        f = sources[j]
        if not reached[k, f] and mark[f] != tag:
            mark[f] = tag
            queue[qlen] = f
            qlen += 1
            total += mass[f]
    pos = 0
    while pos < qlen:
        f = queue[pos]
        pos += 1
        for kk in range(out_ptr[f], out_ptr[f + 1]):
            e = out_edge[kk]
            h = head[e]
            if live[k, e] and not reached[k, h] and mark[h] != tag:
                mark[h] = tag
                queue[qlen] = h
                qlen += 1
                total += mass[h]
    if commit:
        for j in range(qlen):
            reached[k, queue[j]] = True
    return total


@njit(cache=True)
def snapshot_marginals(candidates, n, q, live, reached, out_ptr, out_edge, head, mass):
    """Mean extra mass reached by each candidate across fixed sampled worlds."""
    K = live.shape[0]
    N = reached.shape[1]
    mark = np.zeros(N, np.int64)
    queue = np.empty(N, np.int64)
    src = np.empty(q, np.int64)
    out = np.zeros(candidates.shape[0])
    tag = 0
    for c in range(candidates.shape[0]):
        u = candidates[c]
        for i in range(q):
            src[i] = i * n + u
        acc = 0.0
        for k in range(K):
            tag += 1
            acc += _snapshot_gain(k, src, live, reached, out_ptr, out_edge, head, mass, mark,
                                  tag, queue, False)
        out[c] = acc / K
    return out


@njit(cache=True)
def snapshot_commit(sources, live, reached, out_ptr, out_edge, head, mass):
    """Extend every world's reached set by the cascade from ``sources``."""
    K = live.shape[0]
    N = reached.shape[1]
    mark = np.zeros(N, np.int64)
    queue = np.empty(N, np.int64)
    acc = 0.0
    for k in range(K):
        acc += _snapshot_gain(k, sources, live, reached, out_ptr, out_edge, head, mass, mark,
                              k + 1, queue, True)
    return acc / K
