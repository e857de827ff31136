"""Seeded train/test partitioning."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import Dataset, DatasetError


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 42
    stratified: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def train_size(n: int, fraction: float) -> int:
    """floor(n * fraction), with the fraction read as its shortest decimal form."""
    return math.floor(Fraction(repr(float(fraction))) * n)


def split_indices(n: int, spec: SplitSpec, labels: np.ndarray | None = None):
    """Return sorted ``(train_idx, test_idx)`` for ``n`` rows."""
    n_train = train_size(n, spec.train_fraction)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        train, test = perm[:n_train], perm[n_train:]
    else:
        if labels is None:
            raise ValueError("stratified split needs labels")
        classes = np.unique(labels)
        members = [np.flatnonzero(labels == c) for c in classes]
        exact = [Fraction(repr(float(spec.train_fraction))) * len(m) for m in members]
        quota = [math.floor(e) for e in exact]
        # largest remainder, ties toward the smaller class label
        leftover = n_train - sum(quota)
        order = sorted(range(len(classes)), key=lambda i: (-(exact[i] - quota[i]), i))
        for i in order[:leftover]:
            quota[i] += 1
        train_parts, test_parts = [], []
        for m, q in zip(members, quota):
            p = rng.permutation(m)
            train_parts.append(p[:q])
            test_parts.append(p[q:])
        train, test = np.concatenate(train_parts), np.concatenate(test_parts)
    return np.sort(train), np.sort(test)


def train_test_split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Split ``ds`` into train (floor(n*fraction) rows) and test (the rest).

    Both parts keep the original row order.
    """
    train_idx, test_idx = split_indices(ds.n_rows, spec, ds.y)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise DatasetError(
            f"split of {ds.n_rows} rows at {spec.train_fraction} leaves an empty part")
    return ds.take(train_idx), ds.take(test_idx)


def partition_hash(train_idx: np.ndarray, test_idx: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(train_idx, dtype=np.int64).tobytes())
    h.update(b"|")
    h.update(np.asarray(test_idx, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]
