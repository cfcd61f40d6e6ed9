"""Jitted variance-reduction regression tree (CART) builder and predictor."""
from __future__ import annotations

import numba as nb
import numpy as np

from .rng import randint

LEAF = -1


@nb.njit(cache=True)
def _best_split(X, y, idx, f, min_leaf):
    """Best threshold on feature f; returns (sse_children, threshold, n_left)."""
    m = idx.shape[0]
    xs = np.empty(m)
    for k in range(m):
        xs[k] = X[idx[k], f]
    order = np.argsort(xs, kind="mergesort")
    ys = np.empty(m)
    for k in range(m):
        ys[k] = y[idx[order[k]]]
    xs = xs[order]
    total = 0.0
    total2 = 0.0
    for k in range(m):
        total += ys[k]
        total2 += ys[k] * ys[k]
    best = np.inf
    thr = 0.0
    n_left = -1
    s = 0.0
    s2 = 0.0
    for k in range(1, m):
        s += ys[k - 1]
        s2 += ys[k - 1] * ys[k - 1]
        if k < min_leaf or m - k < min_leaf:
            continue
        if xs[k] <= xs[k - 1]:
            continue
        sse_l = s2 - s * s / k
        r = total - s
        sse_r = (total2 - s2) - r * r / (m - k)
        sse = sse_l + sse_r
        if sse < best:
            best = sse
            mid = 0.5 * (xs[k - 1] + xs[k])
            thr = mid if mid < xs[k] else xs[k - 1]
            n_left = k
    return best, thr, n_left


@nb.njit(cache=True)
def build_tree(X, y, sample, mtry, min_leaf, max_depth, state):
    """Grow one tree on the rows listed in ``sample`` (duplicates allowed).

    Returns node arrays (feature, threshold, left, right, value, n_samples)
    and the per-feature total squared-error decrease.
    """
    n = sample.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    importance = np.zeros(p)

    # explicit stack of (node id, start, stop, depth) over a shared index buffer
    buf = sample.copy()
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    feats = np.arange(p)

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        idx = buf[lo:hi]
        m = hi - lo
        mean = 0.0
        same = True
        y0 = y[idx[0]]
        for k in range(m):
            mean += y[idx[k]]
            if y[idx[k]] != y0:
                same = False
        mean /= m
        sse = 0.0
        for k in range(m):
            d = y[idx[k]] - mean
            sse += d * d
        value[node] = mean
        count[node] = m
        if same or m < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        # visit features in random order until mtry non-constant ones are seen
        for i in range(p - 1, 0, -1):
            j = randint(state, i + 1)
            tmp = feats[i]
            feats[i] = feats[j]
            feats[j] = tmp
        best = np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        for t in range(p):
            f = feats[t]
            first = X[idx[0], f]
            constant = True
            for k in range(1, m):
                if X[idx[k], f] != first:
                    constant = False
                    break
            if constant:
                continue
            visited += 1
            s, thr, nl = _best_split(X, y, idx, f, min_leaf)
            if nl > 0 and s < best:
                best = s
                best_f = f
                best_thr = thr
            if visited >= mtry:
                break
        if best_f < 0 or best >= sse:
            continue

        # partition buf[lo:hi] in place
        i = lo
        j = hi - 1
        while i <= j:
            if X[buf[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = buf[i]
                buf[i] = buf[j]
                buf[j] = tmp
                j -= 1
        mid = i
        if mid == lo or mid == hi:
            continue
        importance[best_f] += sse - best
        feature[node] = best_f
        threshold[node] = best_thr
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        st_node[top] = r_id
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = l_id
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        count[:n_nodes].copy(),
        importance,
    )


@nb.njit(cache=True)
def predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for r in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out
