"""Classification metrics and Pearson feature ranking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import Dataset, require_features
from .features import FEATURE_NAMES


def _check_pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("empty label vectors")
    return y_true, y_pred


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.count_nonzero(y_true == y_pred)) / y_true.size


@dataclass(frozen=True)
class ClassScore:
    label: int
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int

    @property
    def undefined(self) -> int:
        """Number of 0/0 ratios that were replaced by 0."""
        return int(self.predicted == 0) + int(self.support == 0)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _score(label: int, tp: int, predicted: int, support: int) -> ClassScore:
    p = _ratio(tp, predicted)
    r = _ratio(tp, support)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ClassScore(int(label), p, r, f1, int(support), int(predicted))


def per_class_scores(y_true, y_pred) -> list[ClassScore]:
    """Precision/recall/F1 for every class appearing in either vector."""
    y_true, y_pred = _check_pair(y_true, y_pred)
    labels = np.union1d(y_true, y_pred)
    out = []
    for c in labels:
        t = y_true == c
        pr = y_pred == c
        out.append(_score(c, int(np.count_nonzero(t & pr)), int(np.count_nonzero(pr)),
                          int(np.count_nonzero(t))))
    return out


def f1_weighted(y_true, y_pred) -> tuple[float, list[ClassScore]]:
    """Support-weighted mean of per-class F1, plus the per-class table."""
    scores = per_class_scores(y_true, y_pred)
    n = sum(s.support for s in scores)
    return sum(s.support / n * s.f1 for s in scores), scores


def f1_macro(y_true, y_pred) -> float:
    """Unweighted mean over classes present in ``y_true``."""
    scores = [s for s in per_class_scores(y_true, y_pred) if s.support > 0]
    return sum(s.f1 for s in scores) / len(scores)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed [true, predicted] over ascending ``classes``."""

    classes: tuple[int, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def per_class(self) -> list[ClassScore]:
        tp = np.diag(self.counts)
        support = self.counts.sum(axis=1)
        predicted = self.counts.sum(axis=0)
        return [_score(c, int(tp[i]), int(predicted[i]), int(support[i]))
                for i, c in enumerate(self.classes)]

    def f1_weighted(self) -> float:
        scores = self.per_class()
        n = self.total
        return sum(s.support / n * s.f1 for s in scores)

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(tuple(d["classes"]), np.array(d["counts"], dtype=np.int64))


def confusion_matrix(y_true, y_pred, classes: Sequence[int] | None = None) -> ConfusionMatrix:
    y_true, y_pred = _check_pair(y_true, y_pred)
    if classes is None:
        classes = np.union1d(y_true, y_pred)
    classes = tuple(int(c) for c in sorted(classes))
    pos = {c: i for i, c in enumerate(classes)}
    C = len(classes)
    ti = np.array([pos[int(v)] for v in y_true])
    pi = np.array([pos[int(v)] for v in y_pred])
    counts = np.bincount(ti * C + pi, minlength=C * C).reshape(C, C).astype(np.int64)
    return ConfusionMatrix(classes, counts)


# --------------------------------------------------------------------------
# Pearson filter
# --------------------------------------------------------------------------

class Pearson(NamedTuple):
    r: float
    degenerate: bool


def pearson(x, y) -> Pearson:
    """Pearson r with population moments.

    A constant input has no defined correlation; it is reported as
    ``Pearson(0.0, degenerate=True)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-D vectors of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least two samples")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return Pearson(0.0, True)
    dx = x - x.mean()
    dy = y - y.mean()
    cov = np.mean(dx * dy)
    r = cov / np.sqrt(np.mean(dx * dx) * np.mean(dy * dy))
    return Pearson(float(np.clip(r, -1.0, 1.0)), False)


@dataclass(frozen=True)
class FeatureCorrelation:
    feature: str
    r: float
    abs_r: float
    rank: int
    degenerate: bool


@dataclass(frozen=True)
class CorrelationReport:
    entries: tuple[FeatureCorrelation, ...]
    n_samples: int

    def rank_of(self, feature: str) -> int:
        for e in self.entries:
            if e.feature == feature:
                return e.rank
        raise KeyError(feature)

    def ranked(self) -> list[FeatureCorrelation]:
        return sorted(self.entries, key=lambda e: e.rank)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "features": [
                {"feature": e.feature, "r": e.r, "abs_r": e.abs_r, "rank": e.rank,
                 "degenerate": e.degenerate}
                for e in self.ranked()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationReport":
        entries = [FeatureCorrelation(**e) for e in d["features"]]
        # stored by rank; held in canonical feature order
        order = {n: i for i, n in enumerate(FEATURE_NAMES)}
        entries.sort(key=lambda e: (order.get(e.feature, len(order)), e.feature))
        return cls(tuple(entries), int(d["n_samples"]))


def rank_features(ds: Dataset, features: Sequence[str] = FEATURE_NAMES) -> CorrelationReport:
    """Rank features by |Pearson r| against the numeric SF value.

    Ties keep canonical feature order; degenerate (constant) features go last.
    """
    require_features(ds, features)
    sf = ds.y.astype(np.float64)
    raw = []
    for i, name in enumerate(features):
        pr = pearson(ds.column(name), sf)
        raw.append((name, pr.r, abs(pr.r), pr.degenerate, i))
    order = sorted(raw, key=lambda t: (t[3], -t[2], t[4]))
    rank = {t[0]: k + 1 for k, t in enumerate(order)}
    entries = tuple(FeatureCorrelation(name, r, a, rank[name], deg)
                    for name, r, a, deg, _ in raw)
    return CorrelationReport(entries, ds.n_rows)


# --------------------------------------------------------------------------
# Per-run result record
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    """Outcome of one (feature combination, model kind) run. Metrics are in [0, 1]."""

    serial: int
    label: str
    kind: str
    accuracy: float
    f1_weighted: float
    f1_macro: float
    per_class: tuple[ClassScore, ...]
    confusion: ConfusionMatrix
    n_train: int
    n_test: int
    run_seed: int
    run_key: str
    partition_hash: str
    k: int | None = None
    k_curve: dict[int, float] | None = None
    converged: bool | None = None
    n_iter: int | None = None
    seconds: float = 0.0

    @property
    def zero_division(self) -> int:
        return sum(s.undefined for s in self.per_class)

    @classmethod
    def from_predictions(cls, y_true, y_pred, **info) -> "EvalResult":
        wf1, scores = f1_weighted(y_true, y_pred)
        return cls(
            accuracy=accuracy(y_true, y_pred),
            f1_weighted=wf1,
            f1_macro=f1_macro(y_true, y_pred),
            per_class=tuple(scores),
            confusion=confusion_matrix(y_true, y_pred),
            **info,
        )

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "serial": self.serial, "label": self.label, "kind": self.kind,
            "accuracy": self.accuracy, "f1_weighted": self.f1_weighted,
            "f1_macro": self.f1_macro,
            "per_class": [
                {"label": s.label, "precision": s.precision, "recall": s.recall,
                 "f1": s.f1, "support": s.support, "predicted": s.predicted}
                for s in self.per_class
            ],
            "confusion": self.confusion.to_dict(),
            "zero_division": self.zero_division,
            "n_train": self.n_train, "n_test": self.n_test,
            "run_seed": self.run_seed, "run_key": self.run_key,
            "partition_hash": self.partition_hash,
            "k": self.k,
            "k_curve": None if self.k_curve is None
            else {str(k): v for k, v in sorted(self.k_curve.items())},
            "converged": self.converged, "n_iter": self.n_iter,
        }
        if timing:
            d["seconds"] = self.seconds
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        return cls(
            serial=int(d["serial"]), label=d["label"], kind=d["kind"],
            accuracy=d["accuracy"], f1_weighted=d["f1_weighted"], f1_macro=d["f1_macro"],
            per_class=tuple(ClassScore(**s) for s in d["per_class"]),
            confusion=ConfusionMatrix.from_dict(d["confusion"]),
            n_train=d["n_train"], n_test=d["n_test"], run_seed=d["run_seed"],
            run_key=d["run_key"], partition_hash=d["partition_hash"], k=d.get("k"),
            k_curve=None if d.get("k_curve") is None
            else {int(k): v for k, v in d["k_curve"].items()},
            converged=d.get("converged"), n_iter=d.get("n_iter"),
            seconds=d.get("seconds", 0.0),
        )
