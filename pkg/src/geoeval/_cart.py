"""Compiled CART builder and forest traversal.

Trees are grown depth-first with an explicit stack. Split candidates are
midpoints between consecutive distinct values; ties in gain go to the lowest
feature index, then the lowest threshold. Features per node are drawn from a
splitmix64 stream owned by the tree, so a tree depends only on its inputs and
its seed.
"""

import numpy as np
from numba import njit

CLASSIFICATION = 0
REGRESSION = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def _splitmix(state):
    z = state[0] + _GOLDEN
    state[0] = z
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _randbelow(state, m):
    # top 53 bits as a uniform double; bias is negligible for tiny m
    u = np.float64(_splitmix(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    r = np.int64(u * m)
    if r >= m:
        r = m - 1
    return r


@njit(cache=True, nogil=True)
def _best_split_on_feature(X, y, idx, start, end, f, task, order_buf, vals_buf):
    """Best (score, threshold) on feature ``f``; score is the child proxy to maximise.

    Returns score = -inf when the feature is constant in the node.
    """
    n = end - start
    for i in range(n):
        vals_buf[i] = X[idx[start + i], f]
    order = np.argsort(vals_buf[:n], kind="mergesort")
    for i in range(n):
        order_buf[i] = idx[start + order[i]]

    best = -np.inf
    best_thr = 0.0
    if task == CLASSIFICATION:
        tot1 = 0.0
        for i in range(n):
            tot1 += y[order_buf[i]]
        left1 = 0.0
        for i in range(n - 1):
            left1 += y[order_buf[i]]
            a = vals_buf[order[i]]
            b = vals_buf[order[i + 1]]
            if a < b:
                nl = i + 1.0
                nr = n - nl
                l0 = nl - left1
                r1 = tot1 - left1
                r0 = nr - r1
                score = (left1 * left1 + l0 * l0) / nl + (r1 * r1 + r0 * r0) / nr
                if score > best:
                    best = score
                    best_thr = a + (b - a) * 0.5
                    if best_thr >= b:
                        best_thr = a
    else:
        tot = 0.0
        for i in range(n):
            tot += y[order_buf[i]]
        lsum = 0.0
        for i in range(n - 1):
            lsum += y[order_buf[i]]
            a = vals_buf[order[i]]
            b = vals_buf[order[i + 1]]
            if a < b:
                nl = i + 1.0
                nr = n - nl
                rsum = tot - lsum
                score = lsum * lsum / nl + rsum * rsum / nr
                if score > best:
                    best = score
                    best_thr = a + (b - a) * 0.5
                    if best_thr >= b:
                        best_thr = a
    return best, best_thr


@njit(cache=True, nogil=True)
def build_tree(X, y, task, mtry, min_samples_split, max_depth, seed):
    """Grow one tree on rows ``X``/``y`` (already bootstrapped).

    Returns ``(feature, threshold, left, right, value, n_samples)`` arrays; leaves
    have ``feature == -1``. ``value`` is the label-1 frequency (classification)
    or the target mean (regression).
    """
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    nsamp = np.zeros(cap, dtype=np.int64)

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    idx = np.arange(n)
    tmp = np.empty(n, dtype=np.int64)
    order_buf = np.empty(n, dtype=np.int64)
    vals_buf = np.empty(n, dtype=np.float64)
    perm = np.empty(p, dtype=np.int64)

    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        node = st_node[sp]
        m = end - start

        s = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            s += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = s / m
        nsamp[node] = m
        if m < min_samples_split or ymin == ymax or (max_depth >= 0 and depth >= max_depth):
            continue

        # features are visited in a random order; at least mtry are examined and
        # the search continues past mtry until a non-constant feature is found
        for j in range(p):
            perm[j] = j
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        examined = 0
        for j in range(p):
            r = j + _randbelow(state, p - j)
            t = perm[j]
            perm[j] = perm[r]
            perm[r] = t
            f = perm[j]
            score, thr = _best_split_on_feature(X, y, idx, start, end, f, task, order_buf, vals_buf)
            examined += 1
            if score > -np.inf:
                if score > best_score or (score == best_score and f < best_f):
                    best_score = score
                    best_f = f
                    best_thr = thr
            if examined >= mtry and best_f >= 0:
                break
        if best_f < 0:
            continue

        # stable partition: left block keeps original relative order
        nl = 0
        for i in range(start, end):
            if X[idx[i], best_f] <= best_thr:
                tmp[nl] = idx[i]
                nl += 1
        k = nl
        for i in range(start, end):
            if X[idx[i], best_f] > best_thr:
                tmp[k] = idx[i]
                k += 1
        for i in range(m):
            idx[start + i] = tmp[i]

        feature[node] = best_f
        threshold[node] = best_thr
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left subtree is expanded first
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_node[sp] = rnode
        sp += 1
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        st_node[sp] = lnode
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        nsamp[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_flat(X, offsets, feature, threshold, left, right, value):
    """Mean over trees of the leaf value reached by each row of ``X``.

    Node arrays of all trees are concatenated; tree ``t`` occupies
    ``offsets[t]:offsets[t + 1]`` and child indices are tree-local.
    """
    q = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(q, dtype=np.float64)
    for i in range(q):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[i] = acc / n_trees
    return out
