"""Compiled CART kernels used by :mod:`treedecay.forest`."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def splitmix_next(state):
    """Advance a one-element uint64 state array; returns the next output."""
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randbelow(state, k):
    return np.int64(splitmix_next(state) % np.uint64(k))


@njit(cache=True, nogil=True)
def grow_tree(XT, y, w, rows, n_classes, max_depth, min_samples_leaf, max_features, seed):
    """Grow one weighted-Gini CART tree in preorder.

    ``XT`` is the (features, samples) transposed design matrix so a feature
    column is contiguous; only the sample indices in ``rows`` take part.

    Returns (feature, threshold, left, right, value, weight, gain) arrays where
    ``feature == -1`` marks leaves, ``value`` holds the normalized weighted
    class distribution and ``gain`` the weighted impurity decrease of the
    node's split.
    """
    d = XT.shape[0]
    n = len(rows)
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes))
    weight = np.zeros(cap)
    gain = np.zeros(cap)

    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    idx = rows.copy()
    buf = np.empty(n, np.int64)
    vals = np.empty(n)
    perm = np.arange(d)
    lw = np.empty(n_classes)

    # stack entries: start, end, depth, parent, is_left
    stack = np.empty((cap, 5), np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1
    count = 0
    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        node = count
        count += 1
        if parent >= 0:
            if stack[top, 4] == 1:
                left[parent] = node
            else:
                right[parent] = node

        tot = np.zeros(n_classes)
        for k in range(start, end):
            r = idx[k]
            tot[y[r]] += w[r]
        wt = tot.sum()
        weight[node] = wt
        nonzero = 0
        for c in range(n_classes):
            value[node, c] = tot[c] / wt
            if tot[c] > 0:
                nonzero += 1
        size = end - start
        if depth >= max_depth or nonzero <= 1 or size < 2 * min_samples_leaf:
            continue

        parent_score = 0.0
        for c in range(n_classes):
            parent_score += tot[c] * tot[c]
        parent_score /= wt

        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for j in range(d):
            perm[j] = j
        visited = 0
        for j in range(d):
            if visited >= max_features:
                break
            r = j + _randbelow(state, d - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            col = XT[f]
            vmin = np.inf
            vmax = -np.inf
            for k in range(size):
                v = col[idx[start + k]]
                vals[k] = v
                vmin = min(vmin, v)
                vmax = max(vmax, v)
            if vmin == vmax:
                continue
            order = np.argsort(vals[:size])
            visited += 1
            for c in range(n_classes):
                lw[c] = 0.0
            wl = 0.0
            for i in range(size - 1):
                r = idx[start + order[i]]
                lw[y[r]] += w[r]
                wl += w[r]
                if i + 1 < min_samples_leaf or size - i - 1 < min_samples_leaf:
                    continue
                lo = vals[order[i]]
                hi = vals[order[i + 1]]
                if not lo < hi:
                    continue
                wr = wt - wl
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += lw[c] * lw[c]
                    rc = tot[c] - lw[c]
                    sr += rc * rc
                score = sl / wl + sr / wr
                thr = lo + (hi - lo) / 2.0
                if not thr < hi:
                    thr = lo
                if (score > best_score
                        or (score == best_score and (f < best_f or (f == best_f and thr < best_thr)))):
                    best_score = score
                    best_f = f
                    best_thr = thr
        if best_f < 0:
            continue

        nl = 0
        nr = 0
        col = XT[best_f]
        for k in range(start, end):
            r = idx[k]
            if col[r] <= best_thr:
                idx[start + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for k in range(nr):
            idx[start + nl + k] = buf[k]
        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = best_score - parent_score
        # push right first so the left subtree is numbered next (preorder)
        stack[top, 0] = start + nl
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 0
        top += 1
        stack[top, 0] = start
        stack[top, 1] = start + nl
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        top += 1
    return (feature[:count], threshold[:count], left[:count], right[:count], value[:count],
            weight[:count], gain[:count])


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf node index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
