"""Compiled CART (Gini) build and traversal kernels.

Trees are flat arrays: ``feature[i] < 0`` marks a leaf. Rows with ``x <= thr``
go left; NaN goes to the child that received more training rows.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK32 = 0xFFFFFFFF


@njit(cache=True)
def _xorshift(state):
    x = state[0]
    x ^= (x << 13) & _MASK32
    x ^= x >> 17
    x ^= (x << 5) & _MASK32
    x &= _MASK32
    state[0] = x
    return x


@njit(cache=True)
def build_tree(X, y, sample_idx, max_depth, min_leaf, max_features, seed):
    n_feat = X.shape[1]
    m0 = sample_idx.shape[0]
    cap = 2 * m0 + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)
    missing_left = np.zeros(cap, dtype=np.bool_)

    samples = sample_idx.copy()
    buf = np.empty(m0, dtype=np.int64)
    vals = np.empty(m0, dtype=np.float64)
    labs = np.empty(m0, dtype=np.int64)
    perm = np.arange(n_feat)
    state = np.empty(1, dtype=np.int64)
    state[0] = (seed & _MASK32) | 1

    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    sp = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m0
    stack[0, 3] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]
        m = end - start
        pos = 0
        for i in range(start, end):
            pos += y[samples[i]]
        value[node] = pos / m if m > 0 else 0.0
        if pos == 0 or pos == m or m < 2 * min_leaf:
            continue
        if max_depth > 0 and depth >= max_depth:
            continue

        # random feature order; inspect max_features, more only if none split
        for i in range(n_feat):
            perm[i] = i
        best_cost = np.inf
        best_f = -1
        best_thr = 0.0
        inspected = 0
        for j in range(n_feat):
            if inspected >= max_features and best_f >= 0:
                break
            r = j + _xorshift(state) % (n_feat - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            inspected += 1

            nn = 0
            for i in range(start, end):
                v = X[samples[i], f]
                if not np.isnan(v):
                    vals[nn] = v
                    labs[nn] = y[samples[i]]
                    nn += 1
            if nn < 2 * min_leaf:
                continue
            order = np.argsort(vals[:nn], kind="mergesort")
            tot_pos = 0
            for i in range(nn):
                tot_pos += labs[i]
            lp = 0
            for i in range(nn - 1):
                lp += labs[order[i]]
                ln = i + 1
                rn = nn - ln
                if ln < min_leaf:
                    continue
                if rn < min_leaf:
                    break
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if not a < b:
                    continue
                rp = tot_pos - lp
                cost = (lp * (ln - lp) / ln + rp * (rn - rp) / rn) / nn
                if cost < best_cost:
                    best_cost = cost
                    best_f = f
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr

        if best_f < 0:
            continue

        # partition rows; NaN rows follow the larger side
        n_left = 0
        n_right = 0
        for i in range(start, end):
            v = X[samples[i], best_f]
            if not np.isnan(v):
                if v <= best_thr:
                    n_left += 1
                else:
                    n_right += 1
        miss_left = n_left >= n_right
        lo = start
        hi = 0
        for i in range(start, end):
            s = samples[i]
            v = X[s, best_f]
            go_left = miss_left if np.isnan(v) else v <= best_thr
            if go_left:
                samples[lo] = s
                lo += 1
            else:
                buf[hi] = s
                hi += 1
        for i in range(hi):
            samples[lo + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        missing_left[node] = miss_left
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        stack[sp, 0] = rc
        stack[sp, 1] = lo
        stack[sp, 2] = end
        stack[sp, 3] = depth + 1
        sp += 1
        stack[sp, 0] = lc
        stack[sp, 1] = start
        stack[sp, 2] = lo
        stack[sp, 3] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        missing_left[:n_nodes].copy(),
    )


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, missing_left, X, out):
    """Add each row's leaf probability into ``out``."""
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            v = X[r, feature[node]]
            if np.isnan(v):
                go_left = missing_left[node]
            else:
                go_left = v <= threshold[node]
            node = left[node] if go_left else right[node]
        out[r] += value[node]


@njit(cache=True)
def tree_depth(left, right):
    depth = np.zeros(left.shape[0], dtype=np.int64)
    best = 0
    for i in range(left.shape[0]):
        if left[i] >= 0:
            depth[left[i]] = depth[i] + 1
            depth[right[i]] = depth[i] + 1
            if depth[i] + 1 > best:
                best = depth[i] + 1
    return best
