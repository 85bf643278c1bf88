"""Compiled inner loops: Gillespie event simulation and modularity search.

The Gillespie kernel keeps per-vertex total rates in a binary sum tree
(O(log N) selection/update) and per-vertex neighbor-state counts (O(1) rate
deltas on a neighbor flip).  Neighbor count updates cost O(degree) per event;
the tree is only touched for neighbors whose rate actually changes, so
processes whose interaction outflow is insensitive to the neighbor's state
(e.g. the degree process) pay no per-neighbor log factor.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _tree_build(rate, tree, p):
    tree[:] = 0.0
    for i in range(rate.shape[0]):
        tree[p + i] = rate[i]
    for i in range(p - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True)
def _tree_update(tree, p, i, new):
    pos = p + i
    delta = new - tree[pos]
    while pos >= 1:
        tree[pos] += delta
        pos //= 2


@njit(cache=True)
def _tree_sample(tree, p, x):
    pos = 1
    while pos < p:
        left = tree[2 * pos]
        if x < left:
            pos = 2 * pos
        else:
            x -= left
            pos = 2 * pos + 1
    return pos - p


@njit(cache=True)
def _recompute(indptr, indices, state, spont_out, inter_out, inv_nrho,
               counts, rate):
    """Rebuild neighbor-state counts and per-vertex rates from scratch."""
    n = state.shape[0]
    n_states = counts.shape[1]
    counts[:, :] = 0
    for i in range(n):
        for e in range(indptr[i], indptr[i + 1]):
            counts[i, state[indices[e]]] += 1
    for i in range(n):
        s = state[i]
        r = spont_out[s]
        for a in range(n_states):
            r += counts[i, a] * inter_out[a, s] * inv_nrho
        rate[i] = r


@njit(cache=True)
def gillespie_kernel(indptr, indices, blocks, n_blocks, state,
                     spont, spont_out, inter, inter_out, inv_nrho,
                     t_grid, seed, refresh_every, out_counts):
    """Simulate one exact CTMC path, recording block-state counts at grid times.

    Mutates `state`; fills out_counts (T, n_blocks, S) with integer counts.
    Returns (n_events, max_drift) where max_drift is the largest cached-rate
    discrepancy observed at periodic refreshes.
    """
    np.random.seed(seed)
    n = state.shape[0]
    n_states = spont.shape[0]

    counts = np.zeros((n, n_states), dtype=np.int64)
    rate = np.zeros(n, dtype=np.float64)
    _recompute(indptr, indices, state, spont_out, inter_out, inv_nrho,
               counts, rate)

    p = 1
    while p < n:
        p *= 2
    tree = np.zeros(2 * p, dtype=np.float64)
    _tree_build(rate, tree, p)

    bcounts = np.zeros((n_blocks, n_states), dtype=np.int64)
    for i in range(n):
        bcounts[blocks[i], state[i]] += 1

    # a neighbor flip a->b leaves every vertex's rate unchanged iff the
    # interaction outflow rows for a and b coincide
    skip = np.zeros((n_states, n_states), dtype=np.bool_)
    for a in range(n_states):
        for b in range(n_states):
            same = True
            for s in range(n_states):
                if inter_out[a, s] != inter_out[b, s]:
                    same = False
                    break
            skip[a, b] = same

    wgt = np.zeros(n_states, dtype=np.float64)
    t = 0.0
    g = 0
    n_grid = t_grid.shape[0]
    n_events = 0
    max_drift = 0.0
    check = np.zeros(n, dtype=np.float64)

    while True:
        total = tree[1]
        if total > 1e-300:
            t_next = t + np.random.exponential(1.0 / total)
        else:
            t_next = np.inf
        while g < n_grid and t_grid[g] <= t_next:
            for k in range(n_blocks):
                for s in range(n_states):
                    out_counts[g, k, s] = bcounts[k, s]
            g += 1
        if g >= n_grid:
            break
        t = t_next

        i = _tree_sample(tree, p, np.random.random() * total)
        if i >= n:
            i = n - 1
        s_old = state[i]

        total_w = 0.0
        for s2 in range(n_states):
            if s2 == s_old:
                wgt[s2] = 0.0
            else:
                w = spont[s_old, s2]
                for a in range(n_states):
                    w += counts[i, a] * inter[a, s_old, s2] * inv_nrho
                wgt[s2] = w
                total_w += w
        if total_w <= 0.0:
            # stale cached rate selected a silent vertex; repair and move on
            rate[i] = 0.0
            _tree_update(tree, p, i, 0.0)
            continue
        x = np.random.random() * total_w
        acc = 0.0
        s_new = -1
        for s2 in range(n_states):
            acc += wgt[s2]
            if x < acc:
                s_new = s2
                break
        if s_new < 0:
            for s2 in range(n_states - 1, -1, -1):
                if wgt[s2] > 0.0:
                    s_new = s2
                    break

        state[i] = s_new
        bcounts[blocks[i], s_old] -= 1
        bcounts[blocks[i], s_new] += 1
        r = spont_out[s_new]
        for a in range(n_states):
            r += counts[i, a] * inter_out[a, s_new] * inv_nrho
        rate[i] = r
        _tree_update(tree, p, i, r)

        rates_move = not skip[s_old, s_new]
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            counts[j, s_old] -= 1
            counts[j, s_new] += 1
            if rates_move:
                sj = state[j]
                d = (inter_out[s_new, sj] - inter_out[s_old, sj]) * inv_nrho
                if d != 0.0:
                    rate[j] += d
                    _tree_update(tree, p, j, rate[j])

        n_events += 1
        if n_events % refresh_every == 0:
            _recompute(indptr, indices, state, spont_out, inter_out, inv_nrho,
                       counts, check)
            for v in range(n):
                drift = abs(check[v] - rate[v])
                if drift > max_drift:
                    max_drift = drift
                rate[v] = check[v]
            _tree_build(rate, tree, p)

    return n_events, max_drift


@njit(cache=True)
def modularity_climb(indptr, indices, u0, d_over_n, max_passes):
    """Greedy single-vertex-flip ascent of |u'Au - (d/N)|H|^2| from u0.

    Sequential first-improvement passes with incremental (Au) updates.
    Returns (u, signed_deviation, set_size, passes).
    """
    n = u0.shape[0]
    u = u0.copy()
    c = np.zeros(n, dtype=np.int64)
    m = 0
    h = 0
    for i in range(n):
        if u[i]:
            h += 1
            for e in range(indptr[i], indptr[i + 1]):
                c[indices[e]] += 1
    for i in range(n):
        if u[i]:
            m += c[i]

    obj = abs(m - d_over_n * h * h)
    passes = 0
    improved = True
    while improved and passes < max_passes:
        improved = False
        passes += 1
        for i in range(n):
            if u[i]:
                m2 = m - 2 * c[i]
                h2 = h - 1
            else:
                m2 = m + 2 * c[i]
                h2 = h + 1
            obj2 = abs(m2 - d_over_n * h2 * h2)
            if obj2 > obj + 1e-9:
                if u[i]:
                    u[i] = 0
                    delta = np.int64(-1)
                else:
                    u[i] = 1
                    delta = np.int64(1)
                for e in range(indptr[i], indptr[i + 1]):
                    c[indices[e]] += delta
                m = m2
                h = h2
                obj = obj2
                improved = True
    signed = m - d_over_n * h * h
    return u, signed, h, passes
