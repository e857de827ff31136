"""Four classifiers behind one train/predict interface.

k-NN, CART decision tree (DTC), multinomial logistic regression (MLR) and
random forest (RF). All training is deterministic given the seeds in
:class:`Hyperparams`, and every vote or argmax tie resolves to the lowest SF.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, ClassVar

import numpy as np

from ..data import Dataset
from ..metrics import f1_weighted
from ._rng import philox
from .knn import nearest, vote_curve
from .lbfgs import LbfgsResult, minimize_lbfgs
from .softmax import logits, loss_grad, softmax, unpack
from .tree import Tree, forest_votes, grow_forest, grow_tree

FORMAT = "sfselect-model"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class ModelKind(str, enum.Enum):
    KNN = "KNN"
    DTC = "DTC"
    MLR = "MLR"
    RF = "RF"

    @property
    def index(self) -> int:
        return list(ModelKind).index(self)

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        t = text.strip().upper().replace("-", "")
        return cls(t)


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs.

    Defaults: k scanned over 1..20, seed 42, 1000 L-BFGS iterations, 100 bagged trees.
    """

    knn_k_range: tuple[int, int] = (1, 20)
    knn_k_selection: str = "evaluation-set"  # or "validation"
    knn_validation_fraction: float = 0.8
    knn_max_train: int | None = None
    dtc_seed: int = 42
    mlr_max_iter: int = 1000
    mlr_l2_strength: float = 1.0
    mlr_tol: float = 1e-4
    rf_n_estimators: int = 100
    rf_bootstrap: bool = True
    rf_seed: int = 42
    rf_features_per_split: int | None = None  # None: ceil(sqrt(p))
    standardize: bool = False

    def __post_init__(self) -> None:
        lo, hi = self.knn_k_range
        object.__setattr__(self, "knn_k_range", (int(lo), int(hi)))
        if not 1 <= lo <= hi:
            raise ValueError(f"knn_k_range must be a non-empty positive range, got {self.knn_k_range}")
        if self.knn_k_selection not in ("evaluation-set", "validation"):
            raise ValueError(f"unknown knn_k_selection {self.knn_k_selection!r}")
        if self.rf_n_estimators < 1:
            raise ValueError("rf_n_estimators must be >= 1")
        if self.mlr_max_iter < 1:
            raise ValueError("mlr_max_iter must be >= 1")
        if self.mlr_l2_strength < 0:
            raise ValueError("mlr_l2_strength must be >= 0")
        if self.rf_features_per_split is not None and self.rf_features_per_split < 1:
            raise ValueError("rf_features_per_split must be >= 1")
        if self.knn_max_train is not None and self.knn_max_train < 1:
            raise ValueError("knn_max_train must be >= 1")

    def features_per_split(self, p: int) -> int:
        if self.rf_features_per_split is None:
            return math.ceil(math.sqrt(p))
        return min(self.rf_features_per_split, p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["knn_k_range"] = list(self.knn_k_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        d = dict(d)
        if "knn_k_range" in d:
            d["knn_k_range"] = tuple(d["knn_k_range"])
        return cls(**d)


# --------------------------------------------------------------------------
# Serialization helpers (bit-exact floats via hex)
# --------------------------------------------------------------------------

def _enc_f(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "hex": [float.hex(v) for v in a.ravel().tolist()]}


def _dec_f(d: dict) -> np.ndarray:
    return np.array([float.fromhex(v) for v in d["hex"]], dtype=np.float64).reshape(d["shape"])


def _enc_i(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.int64)
    return {"shape": list(a.shape), "int": a.ravel().tolist()}


def _dec_i(d: dict) -> np.ndarray:
    return np.array(d["int"], dtype=np.int64).reshape(d["shape"])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": _enc_f(self.mean), "scale": _enc_f(self.scale)}

    @classmethod
    def from_dict(cls, d: dict | None) -> "Standardizer | None":
        return None if d is None else cls(_dec_f(d["mean"]), _dec_f(d["scale"]))


# --------------------------------------------------------------------------
# Trained models
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False, kw_only=True)
class TrainedModel:
    """Common part of every trained classifier; immutable after training."""

    kind: ClassVar[ModelKind]
    n_features: int
    classes: tuple[int, ...]
    hyperparams: Hyperparams = field(default_factory=Hyperparams)

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        if X.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        return np.asarray(self.classes, dtype=np.int64)[self._predict_index(X)]

    def _predict_index(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _payload(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind.value,
            "n_features": self.n_features,
            "classes": list(self.classes),
            "hyperparams": self.hyperparams.to_dict(),
            "payload": self._payload(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False, kw_only=True)
class KNNModel(TrainedModel):
    kind: ClassVar[ModelKind] = ModelKind.KNN
    X_train: np.ndarray
    y_index: np.ndarray
    k: int
    scaler: Standardizer | None = None
    k_curve: dict[int, float] = field(default_factory=dict)

    def neighbors(self, X: np.ndarray, k: int | None = None):
        Xq = self.scaler.transform(X) if self.scaler else X
        return nearest(self.X_train, np.ascontiguousarray(Xq, dtype=np.float64), k or self.k)

    def _predict_index(self, X):
        idx, _ = self.neighbors(X)
        return vote_curve(self.y_index[idx], len(self.classes))[:, -1]

    def _payload(self):
        return {
            "X_train": _enc_f(self.X_train),
            "y_index": _enc_i(self.y_index),
            "k": self.k,
            "scaler": self.scaler.to_dict() if self.scaler else None,
            "k_curve": {str(k): float.hex(v) for k, v in self.k_curve.items()},
        }

    @classmethod
    def _from_payload(cls, common, p):
        return cls(**common, X_train=_dec_f(p["X_train"]), y_index=_dec_i(p["y_index"]),
                   k=int(p["k"]), scaler=Standardizer.from_dict(p["scaler"]),
                   k_curve={int(k): float.fromhex(v) for k, v in p["k_curve"].items()})


def _enc_tree(t: Tree) -> dict:
    return {"feature": _enc_i(t.feature), "threshold": _enc_f(t.threshold),
            "left": _enc_i(t.left), "right": _enc_i(t.right), "counts": _enc_i(t.counts)}


def _dec_tree(d: dict) -> Tree:
    return Tree(_dec_i(d["feature"]), _dec_f(d["threshold"]), _dec_i(d["left"]),
                _dec_i(d["right"]), _dec_i(d["counts"]))


@dataclass(frozen=True, eq=False, kw_only=True)
class TreeModel(TrainedModel):
    kind: ClassVar[ModelKind] = ModelKind.DTC
    tree: Tree

    def _predict_index(self, X):
        return self.tree.predict_index(X)

    def _payload(self):
        return {"tree": _enc_tree(self.tree)}

    @classmethod
    def _from_payload(cls, common, p):
        return cls(**common, tree=_dec_tree(p["tree"]))


@dataclass(frozen=True, eq=False, kw_only=True)
class ForestModel(TrainedModel):
    kind: ClassVar[ModelKind] = ModelKind.RF
    trees: tuple[Tree, ...]

    def votes(self, X) -> np.ndarray:
        return forest_votes(list(self.trees), _as_matrix(X, self.n_features), len(self.classes))

    def _predict_index(self, X):
        return np.argmax(self.votes(X), axis=1)

    def _payload(self):
        return {"trees": [_enc_tree(t) for t in self.trees]}

    @classmethod
    def _from_payload(cls, common, p):
        return cls(**common, trees=tuple(_dec_tree(t) for t in p["trees"]))


@dataclass(frozen=True, eq=False, kw_only=True)
class SoftmaxModel(TrainedModel):
    kind: ClassVar[ModelKind] = ModelKind.MLR
    W: np.ndarray
    b: np.ndarray
    scaler: Standardizer | None = None
    converged: bool = False
    n_iter: int = 0
    final_loss: float = math.nan
    grad_norm: float = math.nan

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        Xs = self.scaler.transform(X) if self.scaler else X
        return softmax(logits(Xs, self.W, self.b))

    def _predict_index(self, X):
        Xs = self.scaler.transform(X) if self.scaler else X
        return np.argmax(logits(Xs, self.W, self.b), axis=1)

    def _payload(self):
        return {"W": _enc_f(self.W), "b": _enc_f(self.b),
                "scaler": self.scaler.to_dict() if self.scaler else None,
                "converged": self.converged, "n_iter": self.n_iter,
                "final_loss": float.hex(self.final_loss), "grad_norm": float.hex(self.grad_norm)}

    @classmethod
    def _from_payload(cls, common, p):
        return cls(**common, W=_dec_f(p["W"]), b=_dec_f(p["b"]),
                   scaler=Standardizer.from_dict(p["scaler"]), converged=bool(p["converged"]),
                   n_iter=int(p["n_iter"]), final_loss=float.fromhex(p["final_loss"]),
                   grad_norm=float.fromhex(p["grad_norm"]))


_MODEL_CLASSES: dict[ModelKind, Any] = {
    ModelKind.KNN: KNNModel, ModelKind.DTC: TreeModel,
    ModelKind.MLR: SoftmaxModel, ModelKind.RF: ForestModel,
}


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != FORMAT:
        raise ValueError("not a serialized sfselect model")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    kind = ModelKind(d["kind"])
    common = {"n_features": int(d["n_features"]), "classes": tuple(d["classes"]),
              "hyperparams": Hyperparams.from_dict(d["hyperparams"])}
    return _MODEL_CLASSES[kind]._from_payload(common, d["payload"])


def model_from_json(text: str) -> TrainedModel:
    return model_from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

def _as_matrix(X, p: int | None = None) -> np.ndarray:
    if isinstance(X, Dataset):
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, p or 0)
    if p is not None and X.shape[1] != p:
        raise ValueError(f"expected {p} feature columns, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise ValueError("inputs contain NaN or Inf")
    return np.ascontiguousarray(X)


def _prepare(train: Dataset) -> tuple[np.ndarray, tuple[int, ...], np.ndarray]:
    if train.n_rows == 0:
        raise TrainingError("training set is empty")
    if not np.isfinite(train.X).all():
        raise TrainingError("training features contain NaN or Inf")
    classes = tuple(int(c) for c in np.unique(train.y))
    if len(classes) < 2:
        raise TrainingError(f"need at least two classes, got {classes}")
    y_index = np.searchsorted(np.array(classes), train.y).astype(np.int64)
    return np.ascontiguousarray(train.X), classes, y_index


def _subsample(ds: Dataset, max_rows: int | None, seed: int) -> Dataset:
    if max_rows is None or ds.n_rows <= max_rows:
        return ds
    idx = np.sort(philox(seed, 0x5AB).choice(ds.n_rows, size=max_rows, replace=False))
    return ds.take(idx)


def knn_select_best_k(train: Dataset, eval: Dataset, k_range=(1, 20), *,
                      standardize: bool = False) -> tuple[int, dict[int, float]]:
    """Scan k over ``k_range`` (inclusive) and keep the best weighted F1 on ``eval``.

    Ties go to the smaller k. Returns the chosen k and the full F1-per-k curve.
    """
    lo, hi = k_range
    if eval.n_rows == 0:
        raise ValueError("evaluation set is empty")
    if not 1 <= lo <= hi <= train.n_rows:
        raise ValueError(f"k range {k_range} not within [1, {train.n_rows}]")
    X, classes, y_index = _prepare(train)
    Xq = _as_matrix(eval.X, X.shape[1])
    if standardize:
        sc = Standardizer.fit(X)
        X, Xq = sc.transform(X), sc.transform(Xq)
    idx, _ = nearest(np.ascontiguousarray(X), np.ascontiguousarray(Xq), hi)
    preds = np.asarray(classes)[vote_curve(y_index[idx], len(classes))]
    curve = {k: f1_weighted(eval.y, preds[:, k - 1])[0] for k in range(lo, hi + 1)}
    best = lo
    for k in range(lo, hi + 1):
        if curve[k] > curve[best]:
            best = k
    return best, curve


def knn_train(train: Dataset, hp: Hyperparams = Hyperparams(),
              test_for_k: Dataset | None = None, k: int | None = None) -> KNNModel:
    """Store the training set and pick k (or use the forced ``k``)."""
    from ..split import SplitSpec, train_test_split

    train = _subsample(train, hp.knn_max_train, hp.dtc_seed)
    X, classes, y_index = _prepare(train)
    curve: dict[int, float] = {}
    if k is None:
        lo, hi = hp.knn_k_range
        if hp.knn_k_selection == "evaluation-set":
            if test_for_k is None:
                raise TrainingError("k selection on the evaluation set needs test_for_k")
            k, curve = knn_select_best_k(train, test_for_k, (lo, min(hi, train.n_rows)),
                                         standardize=hp.standardize)
        else:
            fit, val = train_test_split(
                train, SplitSpec(hp.knn_validation_fraction, seed=hp.dtc_seed))
            k, curve = knn_select_best_k(fit, val, (lo, min(hi, fit.n_rows)),
                                         standardize=hp.standardize)
    if not 1 <= k <= train.n_rows:
        raise TrainingError(f"k={k} outside [1, {train.n_rows}]")
    scaler = Standardizer.fit(X) if hp.standardize else None
    if scaler:
        X = np.ascontiguousarray(scaler.transform(X))
    X.setflags(write=False)
    return KNNModel(n_features=X.shape[1], classes=classes, hyperparams=hp,
                    X_train=X, y_index=y_index, k=int(k), scaler=scaler, k_curve=curve)


def knn_predict(model: KNNModel, x) -> int:
    """Predict one p-vector."""
    return int(model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def dtc_train(train: Dataset, seed: int = 42, hp: Hyperparams | None = None) -> TreeModel:
    """Unrestricted CART: grows until leaves are pure or inseparable."""
    hp = replace(hp or Hyperparams(), dtc_seed=seed)
    X, classes, y_index = _prepare(train)
    tree = grow_tree(X, y_index, len(classes), seed=seed, tree_index=0)
    return TreeModel(n_features=X.shape[1], classes=classes, hyperparams=hp, tree=tree)


def rf_train(train: Dataset, hp: Hyperparams = Hyperparams()) -> ForestModel:
    """Random forest; tree t draws its bootstrap and split features from stream (seed, t)."""
    X, classes, y_index = _prepare(train)
    trees = grow_forest(X, y_index, len(classes), n_estimators=hp.rf_n_estimators,
                        seed=hp.rf_seed, bootstrap=hp.rf_bootstrap,
                        max_features=hp.features_per_split(X.shape[1]))
    return ForestModel(n_features=X.shape[1], classes=classes, hyperparams=hp,
                       trees=tuple(trees))


def mlr_objective(train: Dataset, hp: Hyperparams = Hyperparams()):
    """Return ``(fun, n_classes, n_features)`` for the regularized softmax loss."""
    X, classes, y_index = _prepare(train)
    if hp.standardize:
        X = np.ascontiguousarray(Standardizer.fit(X).transform(X))
    C, lam = len(classes), float(hp.mlr_l2_strength)

    def fun(theta):
        return loss_grad(theta, X, y_index, C, lam)

    return fun, C, X.shape[1]


def mlr_train(train: Dataset, hp: Hyperparams = Hyperparams()) -> SoftmaxModel:
    """Softmax regression fitted by L-BFGS from a zero start."""
    X, classes, _ = _prepare(train)
    scaler = Standardizer.fit(X) if hp.standardize else None
    fun, C, p = mlr_objective(train, hp)
    try:
        res: LbfgsResult = minimize_lbfgs(fun, np.zeros(C * p + C), memory=10,
                                          tol=hp.mlr_tol, max_iter=hp.mlr_max_iter)
    except FloatingPointError as exc:
        raise TrainingError(str(exc)) from exc
    if not math.isfinite(res.fun):
        raise TrainingError("softmax loss became non-finite")
    W, b = unpack(res.x, C, p)
    return SoftmaxModel(n_features=p, classes=classes, hyperparams=hp, W=W.copy(), b=b.copy(),
                        scaler=scaler, converged=res.converged, n_iter=res.n_iter,
                        final_loss=res.fun, grad_norm=res.grad_norm)


def train(kind: ModelKind | str, train: Dataset, hp: Hyperparams = Hyperparams(),
          test_for_k: Dataset | None = None) -> TrainedModel:
    kind = ModelKind.parse(kind) if isinstance(kind, str) else kind
    if kind is ModelKind.KNN:
        return knn_train(train, hp, test_for_k)
    if kind is ModelKind.DTC:
        return dtc_train(train, hp.dtc_seed, hp)
    if kind is ModelKind.MLR:
        return mlr_train(train, hp)
    if kind is ModelKind.RF:
        return rf_train(train, hp)
    raise ValueError(f"unknown model kind {kind}")


def predict(model: TrainedModel, X) -> np.ndarray:
    return model.predict(X)


__all__ = [
    "ModelKind", "Hyperparams", "TrainedModel", "KNNModel", "TreeModel", "ForestModel",
    "SoftmaxModel", "TrainingError", "train", "predict", "knn_select_best_k", "knn_train",
    "knn_predict", "dtc_train", "rf_train", "mlr_train", "mlr_objective", "model_from_dict",
    "model_from_json",
]
