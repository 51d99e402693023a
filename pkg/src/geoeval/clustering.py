"""K-means, agglomerative hierarchical clustering and a co-association cluster ensemble.

All labelings are returned with ids renumbered by order of first appearance,
so two runs that find the same partition produce identical label arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._seeding import rng_for
from .exceptions import InsufficientDataError

MAX_ITER = 300


@dataclass(frozen=True, eq=False)
class Labeling:
    labels: np.ndarray
    k: int
    centers: np.ndarray | None = None
    inertia_history: tuple = ()
    has_empty: bool = False

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def canonical_labels(labels) -> tuple[np.ndarray, np.ndarray]:
    """Renumber ids by first appearance. Returns (new_labels, old_id_of_new)."""
    labels = np.asarray(labels, dtype=np.int64)
    _, first = np.unique(labels, return_index=True)
    old_order = labels[np.sort(first)]
    remap = np.empty(labels.max() + 1 if labels.size else 0, dtype=np.int64)
    remap[old_order] = np.arange(len(old_order))
    return remap[labels], old_order


def _as_points(points):
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _sqdist(X, C, chunk=8192):
    out = np.empty((len(X), len(C)))
    for s in range(0, len(X), chunk):
        diff = X[s:s + chunk, None, :] - C[None, :, :]
        out[s:s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _kmeanspp(X, k, rng):
    q = len(X)
    chosen = [int(rng.integers(q))]
    d2 = _sqdist(X, X[chosen[-1]][None])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(q, p=d2 / total))
        else:
            # remaining points all coincide with a centre: pick any unchosen index
            free = np.setdiff1d(np.arange(q), chosen)
            nxt = int(free[rng.integers(len(free))])
        chosen.append(nxt)
        d2 = np.minimum(d2, _sqdist(X, X[nxt][None])[:, 0])
    return X[chosen].copy()


def kmeans(points, k: int, seed: int = 0, max_iter: int = MAX_ITER) -> Labeling:
    """Lloyd's algorithm from a k-means++ start.

    Iterates until the assignment stops changing or ``max_iter`` is reached.
    An empty cluster is re-seeded on the point farthest from its centre.
    """
    X = _as_points(points)
    q = len(X)
    if k < 1 or q < k:
        raise InsufficientDataError(f"k-means needs 1 <= k <= Q (k={k}, Q={q})")
    rng = rng_for(seed)
    C = _kmeanspp(X, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        D = _sqdist(X, C)
        new = np.argmin(D, axis=1)
        dmin = D[np.arange(q), new]
        history.append(float(dmin.sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(np.where(counts[labels] > 1, dmin, -1.0)))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            dmin[far] = 0.0
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        C = sums / counts[:, None]
    counts = np.bincount(labels, minlength=k)
    canon, old = canonical_labels(labels)
    return Labeling(canon, k, C[old], tuple(history), bool((counts == 0).any()))


def _agglomerate(D, n_clusters, linkage):
    """Merge clusters on a precomputed dissimilarity matrix.

    For Ward, ``D`` must hold the merge cost of singletons (half the squared
    Euclidean distance); Lance-Williams updates then keep it equal to the
    increase in within-cluster sum of squares. Ties are broken by the
    lexicographically smallest pair of slot indices; a cluster lives in the
    slot of its smallest member.
    """
    q = len(D)
    D = np.array(D, dtype=np.float64)
    D[np.tril_indices(q)] = np.inf
    size = np.ones(q)
    slot = np.arange(q)
    active = np.ones(q, dtype=bool)
    for _ in range(q - n_clusters):
        flat = int(np.argmin(D))
        i, j = divmod(flat, q)
        ni, nj = size[i], size[j]
        dij = D[i, j]
        # current distances of every active cluster to i and j (matrix is upper-triangular)
        di = np.where(np.arange(q) < i, D[:, i], D[i, :])
        dj = np.where(np.arange(q) < j, D[:, j], D[j, :])
        if linkage == "ward":
            nk = size
            new = ((ni + nk) * di + (nj + nk) * dj - nk * dij) / (ni + nj + nk)
        elif linkage == "average":
            new = (ni * di + nj * dj) / (ni + nj)
        else:
            raise ValueError(f"unknown linkage {linkage!r}")
        active[j] = False
        new[~active] = np.inf
        new[i] = np.inf
        D[:i, i] = new[:i]
        D[i, i + 1:] = new[i + 1:]
        D[j, :] = np.inf
        D[:, j] = np.inf
        size[i] = ni + nj
        slot[slot == j] = i
    return canonical_labels(slot)[0]


def ahc(points, n_clusters: int, linkage: str = "ward") -> Labeling:
    """Bottom-up agglomerative clustering to ``n_clusters`` groups.

    Points are first put in a canonical (lexicographic) order so the
    index-based tie-break does not depend on input order.
    """
    X = _as_points(points)
    q = len(X)
    if n_clusters < 1 or q < n_clusters:
        raise InsufficientDataError(f"AHC needs 1 <= n_clusters <= Q (n={n_clusters}, Q={q})")
    order = np.lexsort(X.T[::-1])
    Xs = X[order]
    D = _sqdist(Xs, Xs)
    if linkage == "ward":
        D *= 0.5
    else:
        D = np.sqrt(D)
    lab_sorted = _agglomerate(D, n_clusters, linkage)
    labels = np.empty(q, dtype=np.int64)
    labels[order] = lab_sorted
    return Labeling(labels, n_clusters)


def ahc_precomputed(dissimilarity, n_clusters: int, linkage: str = "average") -> Labeling:
    D = np.asarray(dissimilarity, dtype=np.float64)
    q = len(D)
    if D.shape != (q, q):
        raise ValueError("dissimilarity must be square")
    if n_clusters < 1 or q < n_clusters:
        raise InsufficientDataError(f"AHC needs 1 <= n_clusters <= Q (n={n_clusters}, Q={q})")
    return Labeling(_agglomerate(D, n_clusters, linkage), n_clusters)


def co_association(views) -> np.ndarray:
    """Fraction of views that put each pair of items in the same cluster."""
    views = [np.asarray(v.labels if isinstance(v, Labeling) else v) for v in views]
    if not views:
        raise ValueError("need at least one view")
    b = len(views[0])
    if any(len(v) != b for v in views):
        raise ValueError("all views must label the same items")
    M = np.zeros((b, b))
    for v in views:
        M += v[:, None] == v[None, :]
    return M / len(views)


def cluster_ensemble(views, k: int, seed: int | None = None) -> Labeling:
    """Consensus grouping of B items into ``k`` groups from several labelings.

    Average-linkage AHC on ``1 - co-association``, followed by a greedy
    rebalance so that no group holds more than ``ceil(2B / k)`` items: the
    member with the weakest mean affinity to its own group moves from the
    largest group to the smallest. Fully deterministic; ``seed`` is accepted
    for signature compatibility with the other fold builders.
    """
    M = co_association(views)
    b = len(M)
    if k < 1 or b < k:
        raise InsufficientDataError(f"cluster ensemble needs B >= k (B={b}, k={k})")
    labels = ahc_precomputed(1.0 - M, k, "average").labels.copy()
    cap = math.ceil(2 * b / k)
    while True:
        sizes = np.bincount(labels, minlength=k)
        big = int(np.argmax(sizes))
        if sizes[big] <= cap:
            break
        small = int(np.argmin(sizes))
        members = np.flatnonzero(labels == big)
        sub = M[np.ix_(members, members)]
        affinity = (sub.sum(axis=1) - 1.0) / (len(members) - 1)
        labels[members[int(np.argmin(affinity))]] = small
    return Labeling(canonical_labels(labels)[0], k)
