"""Brute-force k-nearest-neighbour search and voting."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def nearest(train, query, k):
    """Indices and squared distances of the ``k`` nearest training rows per query.

    Neighbours are ordered by (distance, training index); equal distances keep
    the lower training index, so the cut at the k-th neighbour is deterministic.
    """
    n, p = train.shape
    q = query.shape[0]
    k = min(k, n)
    out_idx = np.empty((q, k), dtype=np.int64)
    out_d = np.empty((q, k), dtype=np.float64)
    best_d = np.empty(k, dtype=np.float64)
    best_i = np.empty(k, dtype=np.int64)
    for r in range(q):
        filled = 0
        for i in range(n):
            d = 0.0
            for j in range(p):
                t = train[i, j] - query[r, j]
                d += t * t
            if filled == k and d >= best_d[k - 1]:
                continue
            # insertion after every entry with distance <= d
            pos = filled if filled < k else k - 1
            while pos > 0 and best_d[pos - 1] > d:
                if pos < k:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d
            best_i[pos] = i
            if filled < k:
                filled += 1
        out_idx[r] = best_i
        out_d[r] = best_d
    return out_idx, out_d


def vote_curve(neighbor_labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Majority-vote class index for every k = 1..K.

    ``neighbor_labels`` is (n_query, K) class indices ordered nearest first.
    Returns (n_query, K); column k-1 is the k-NN prediction. Vote ties go to the
    lowest class index.
    """
    onehot = neighbor_labels[:, :, None] == np.arange(n_classes)[None, None, :]
    counts = np.cumsum(onehot, axis=1, dtype=np.int64)
    return np.argmax(counts, axis=2)
