"""CART decision trees and random forests (Gini criterion), numba-compiled."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ._rng import derive_seed, mix64, philox

LEAF = -1


@numba.njit(cache=True, nogil=True)
def _feature_order(key, node_id, n_features):
    """Seeded Fisher-Yates permutation of feature indices for one node."""
    perm = np.arange(n_features)
    k = mix64(key ^ mix64(np.uint64(node_id)))
    for i in range(n_features - 1, 0, -1):
        r = mix64(k + np.uint64(i))
        j = np.int64(r % np.uint64(i + 1))
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
    return perm


@numba.njit(cache=True, nogil=True)
def _build(Xs, ys, n_classes, max_features, key):
    """Grow one tree on samples ``Xs``/``ys`` (duplicates allowed).

    Nodes split until pure or until every feature is constant inside the node.
    The split maximizes the count-weighted Gini decrease
    ``nl*nr/n * sum_k (l_k/nl - r_k/nr)**2``. Features are visited in a seeded
    per-node order; non-constant features count toward ``max_features`` and
    the first maximal (feature, threshold) in visiting order wins.
    """
    m, p = Xs.shape
    order = np.empty((p, m), dtype=np.int64)
    for f in range(p):
        order[f] = np.argsort(Xs[:, f], kind="mergesort")

    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.int64)

    for i in range(m):
        counts[0, ys[i]] += 1
    n_nodes = 1

    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    sp = 1

    lcount = np.zeros(n_classes, dtype=np.int64)
    goes_left = np.zeros(m, dtype=np.bool_)
    buf = np.empty(m, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        n = hi - lo

        nonzero = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                nonzero += 1
        if nonzero <= 1:
            continue

        perm = _feature_order(key, node, p)
        best_gain = -1.0
        best_f = -1
        best_thr = 0.0
        visited = 0
        for fi in range(p):
            if visited >= max_features:
                break
            f = perm[fi]
            idx = order[f]
            first = Xs[idx[lo], f]
            last = Xs[idx[hi - 1], f]
            if first == last:
                continue
            visited += 1
            for c in range(n_classes):
                lcount[c] = 0
            for j in range(lo, hi - 1):
                s = idx[j]
                lcount[ys[s]] += 1
                v = Xs[s, f]
                v_next = Xs[idx[j + 1], f]
                if v == v_next:
                    continue
                nl = j - lo + 1
                nr = n - nl
                acc = 0.0
                for c in range(n_classes):
                    diff = lcount[c] / nl - (counts[node, c] - lcount[c]) / nr
                    acc += diff * diff
                gain = (nl * nr / n) * acc
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = v + (v_next - v) / 2.0
                    if thr == v_next:
                        thr = v
                    best_thr = thr

        if best_f < 0:
            continue

        # partition every feature ordering of [lo, hi) stably into left | right
        idx0 = order[best_f]
        for j in range(lo, hi):
            s = idx0[j]
            goes_left[s] = Xs[s, best_f] <= best_thr
        n_left = 0
        for f in range(p):
            idx = order[f]
            a = lo
            b = 0
            for j in range(lo, hi):
                s = idx[j]
                if goes_left[s]:
                    idx[a] = s
                    a += 1
                else:
                    buf[b] = s
                    b += 1
            for j in range(b):
                idx[a + j] = buf[j]
            n_left = a - lo

        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = l_id
        right[node] = r_id
        idx = order[0]
        for j in range(lo, lo + n_left):
            counts[l_id, ys[idx[j]]] += 1
        for c in range(n_classes):
            counts[r_id, c] = counts[node, c] - counts[l_id, c]

        st_node[sp] = r_id
        st_lo[sp] = lo + n_left
        st_hi[sp] = hi
        sp += 1
        st_node[sp] = l_id
        st_lo[sp] = lo
        st_hi[sp] = lo + n_left
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right, leaf_class):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_class[node]
    return out


@dataclass(frozen=True)
class Tree:
    """Flat node arrays. ``counts[i]`` is the class histogram of node ``i``'s samples."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def leaf_class(self) -> np.ndarray:
        # argmax takes the first maximum, i.e. the lowest class index
        return np.argmax(self.counts, axis=1).astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        return _apply(np.ascontiguousarray(X, dtype=np.float64), self.feature,
                      self.threshold, self.left, self.right, self.leaf_class)


def grow_tree(X: np.ndarray, y_idx: np.ndarray, n_classes: int, *, seed: int,
              tree_index: int = 0, max_features: int | None = None,
              sample: np.ndarray | None = None) -> Tree:
    """Grow one unrestricted CART tree.

    ``y_idx`` holds class indices 0..n_classes-1. ``sample`` optionally selects
    (possibly repeated) training rows, e.g. a bootstrap draw.
    """
    X = np.asarray(X, dtype=np.float64)
    y_idx = np.asarray(y_idx, dtype=np.int64)
    if sample is not None:
        X, y_idx = X[sample], y_idx[sample]
    p = X.shape[1]
    mf = p if max_features is None else max(1, min(int(max_features), p))
    key = np.uint64(derive_seed(seed, tree_index))
    arrays = _build(np.ascontiguousarray(X), np.ascontiguousarray(y_idx), n_classes, mf, key)
    return Tree(*arrays)


def bootstrap_sample(n: int, seed: int, tree_index: int) -> np.ndarray:
    """n draws with replacement from the stream keyed by (seed, tree_index)."""
    return philox(seed, tree_index, 0xB007).integers(0, n, size=n)


def grow_forest(X: np.ndarray, y_idx: np.ndarray, n_classes: int, *, n_estimators: int,
                seed: int, bootstrap: bool = True,
                max_features: int | None = None) -> list[Tree]:
    n = len(y_idx)
    trees = []
    for t in range(n_estimators):
        sample = bootstrap_sample(n, seed, t) if bootstrap else None
        trees.append(grow_tree(X, y_idx, n_classes, seed=seed, tree_index=t,
                               max_features=max_features, sample=sample))
    return trees


def forest_votes(trees: list[Tree], X: np.ndarray, n_classes: int) -> np.ndarray:
    """(n_rows, n_classes) hard-vote counts."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    votes = np.zeros((X.shape[0], n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in trees:
        votes[rows, tree.predict_index(X)] += 1
    return votes
