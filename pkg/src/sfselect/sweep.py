"""Run every (feature combination, model kind) pair on one shared split."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

from . import __version__
from .data import Dataset, require_features, select_features
from .features import CATALOG, ComboCatalog
from .metrics import CorrelationReport, EvalResult, rank_features
from .models import Hyperparams, ModelKind, train
from .models._rng import derive_seed
from .split import SplitSpec, partition_hash, split_indices

logger = logging.getLogger(__name__)

REPORT_FORMAT = "sfselect-sweep"
REPORT_VERSION = 1


class SweepError(RuntimeError):
    def __init__(self, serial: int, kind: str, cause: BaseException):
        super().__init__(f"run (serial {serial}, {kind}) failed: {cause}")
        self.serial = serial
        self.kind = kind


class SweepInterrupted(KeyboardInterrupt):
    """Raised on Ctrl-C after in-flight runs drain; carries the partial report."""

    def __init__(self, report: "SweepReport"):
        super().__init__("sweep interrupted")
        self.report = report


@dataclass(frozen=True)
class SweepPlan:
    serials: tuple[int, ...] = tuple(range(1, 32))
    kinds: tuple[ModelKind, ...] = tuple(ModelKind)
    hyperparams: Hyperparams = Hyperparams()
    split: SplitSpec = SplitSpec()
    base_seed: int = 42
    workers: int = 1
    keep_going: bool = False
    catalog: ComboCatalog = field(default=CATALOG, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "serials", tuple(sorted(set(int(s) for s in self.serials))))
        kinds = tuple(ModelKind.parse(k) if isinstance(k, str) else k for k in self.kinds)
        object.__setattr__(self, "kinds", tuple(k for k in ModelKind if k in kinds))
        for s in self.serials:
            self.catalog[s]
        if not self.serials or not self.kinds:
            raise ValueError("plan selects no runs")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def runs(self) -> list[tuple[int, ModelKind]]:
        return [(s, k) for s in self.serials for k in self.kinds]

    def __len__(self) -> int:
        return len(self.serials) * len(self.kinds)


def run_seed(base_seed: int, serial: int, kind: ModelKind) -> int:
    """Per-run model seed; independent of which other runs exist."""
    return derive_seed(base_seed, serial, kind.index) >> 1


def _run_key(dataset_hash: str, plan: SweepPlan, serial: int, kind: ModelKind) -> str:
    blob = json.dumps({
        "dataset": dataset_hash, "split": vars(plan.split),
        "hyperparams": plan.hyperparams.to_dict(), "base_seed": plan.base_seed,
        "serial": serial, "kind": kind.value, "format": REPORT_VERSION,
    }, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def aggregate_averages(results: Iterable[EvalResult],
                       kinds: Iterable[ModelKind | str] = tuple(ModelKind)
                       ) -> dict[int, tuple[float, float]]:
    """Per-serial arithmetic mean of (accuracy, weighted F1) over ``kinds``.

    Every serial present must have exactly one result per kind.
    """
    want = [k.value if isinstance(k, ModelKind) else str(k) for k in kinds]
    by_serial: dict[int, dict[str, EvalResult]] = {}
    for r in results:
        slot = by_serial.setdefault(r.serial, {})
        if r.kind in slot:
            raise ValueError(f"duplicate result for serial {r.serial}, {r.kind}")
        slot[r.kind] = r
    out = {}
    for serial in sorted(by_serial):
        slot = by_serial[serial]
        missing = [k for k in want if k not in slot]
        if missing or len(slot) != len(want):
            raise ValueError(f"serial {serial} lacks results for {missing or sorted(slot)}")
        rs = [slot[k] for k in want]
        out[serial] = (sum(r.accuracy for r in rs) / len(rs),
                       sum(r.f1_weighted for r in rs) / len(rs))
    return out


@dataclass
class SweepReport:
    results: list[EvalResult]
    averages: dict[int, tuple[float, float]]
    correlation: CorrelationReport | None
    metadata: dict
    failures: list[dict] = field(default_factory=list)

    def result(self, serial: int, kind: ModelKind | str) -> EvalResult:
        kind = kind.value if isinstance(kind, ModelKind) else kind
        for r in self.results:
            if r.serial == serial and r.kind == kind:
                return r
        raise KeyError((serial, kind))

    @property
    def complete(self) -> bool:
        kinds = self.metadata.get("kinds", [k.value for k in ModelKind])
        return not self.failures and len(self.averages) == 31 and len(kinds) == 4

    def to_dict(self, timing: bool = True) -> dict:
        meta = dict(self.metadata)
        if not timing:
            meta.pop("runtime", None)
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "metadata": meta,
            "results": [r.to_dict(timing=timing) for r in self.results],
            "averages": {str(s): {"accuracy": a, "f1_weighted": f}
                         for s, (a, f) in sorted(self.averages.items())},
            "correlation": self.correlation.to_dict() if self.correlation else None,
            "failures": self.failures,
        }

    def canonical_json(self) -> str:
        """Serialization with timing and runtime fields removed, for byte comparison."""
        return json.dumps(self.to_dict(timing=False), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a sweep report")
        return cls(
            results=[EvalResult.from_dict(r) for r in d["results"]],
            averages={int(s): (v["accuracy"], v["f1_weighted"])
                      for s, v in d["averages"].items()},
            correlation=None if d.get("correlation") is None
            else CorrelationReport.from_dict(d["correlation"]),
            metadata=d["metadata"],
            failures=d.get("failures", []),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SweepReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_csv_rows(self) -> list[list]:
        rows = [["serial", "label", "kind", "accuracy", "f1_weighted", "k", "seconds"]]
        for r in self.results:
            rows.append([r.serial, r.label, r.kind, r.accuracy, r.f1_weighted,
                         "" if r.k is None else r.k, round(r.seconds, 3)])
        return rows


def _sort_key(r: EvalResult):
    return r.serial, ModelKind(r.kind).index


def _evaluate(train_ds: Dataset, test_ds: Dataset, serial: int, kind: ModelKind,
              plan: SweepPlan, info: dict) -> EvalResult:
    t0 = time.perf_counter()
    fs = plan.catalog[serial]
    tr = select_features(train_ds, fs)
    te = select_features(test_ds, fs)
    seed = run_seed(plan.base_seed, serial, kind)
    hp = replace(plan.hyperparams, dtc_seed=seed, rf_seed=seed)
    model = train(kind, tr, hp, test_for_k=te)
    pred = model.predict(te.X)
    extra = {}
    if kind is ModelKind.KNN:
        extra = {"k": model.k, "k_curve": dict(model.k_curve) or None}
    elif kind is ModelKind.MLR:
        extra = {"converged": model.converged, "n_iter": model.n_iter}
    return EvalResult.from_predictions(
        te.y, pred, serial=serial, label=fs.label, kind=kind.value,
        n_train=tr.n_rows, n_test=te.n_rows, run_seed=seed,
        run_key=info["keys"][(serial, kind)], partition_hash=info["partition_hash"],
        seconds=time.perf_counter() - t0, **extra)


def run_sweep(ds: Dataset, plan: SweepPlan = SweepPlan(), *,
              resume: Mapping[str, EvalResult] | Iterable[EvalResult] | None = None,
              on_result: Callable[[EvalResult], None] | None = None,
              extra_metadata: dict | None = None) -> SweepReport:
    """Train and evaluate every run in ``plan`` on a single shared split of ``ds``.

    Results are identical for any worker count. ``resume`` supplies earlier
    results; any whose run key matches is reused instead of retrained.
    ``on_result`` is called from the calling thread as each run finishes.
    """
    require_features(ds)
    t_start = time.perf_counter()
    dataset_hash = ds.content_hash()
    train_idx, test_idx = split_indices(ds.n_rows, plan.split, ds.y)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ValueError("split leaves an empty train or test part")
    train_ds, test_ds = ds.take(train_idx), ds.take(test_idx)
    info = {
        "partition_hash": partition_hash(train_idx, test_idx),
        "keys": {(s, k): _run_key(dataset_hash, plan, s, k) for s, k in plan.runs},
    }

    if resume is None:
        prior: dict[str, EvalResult] = {}
    elif isinstance(resume, Mapping):
        prior = dict(resume)
    else:
        prior = {r.run_key: r for r in resume}

    done: dict[tuple[int, str], EvalResult] = {}
    failures: list[dict] = []
    todo = []
    for serial, kind in plan.runs:
        hit = prior.get(info["keys"][(serial, kind)])
        if hit is not None:
            done[(serial, kind.value)] = hit
        else:
            todo.append((serial, kind))
    if done:
        logger.info("reusing %d of %d runs from a previous report", len(done), len(plan))

    def build(interrupted: bool = False) -> SweepReport:
        results = sorted(done.values(), key=_sort_key)
        counts: dict[int, int] = {}
        for r in results:
            counts[r.serial] = counts.get(r.serial, 0) + 1
        full = [r for r in results if counts[r.serial] == len(plan.kinds)]
        meta = {
            "software": {"name": "sfselect", "version": __version__},
            "dataset_hash": dataset_hash,
            "n_rows": ds.n_rows,
            "n_train": len(train_idx),
            "n_test": len(test_idx),
            "partition_hash": info["partition_hash"],
            "split": vars(plan.split),
            "split_convention": "one shared split for all runs",
            "base_seed": plan.base_seed,
            "seed_stream": "run seed = splitmix64 fold of (base_seed, serial, kind index)",
            "hyperparams": plan.hyperparams.to_dict(),
            "standardize": plan.hyperparams.standardize,
            "serials": list(plan.serials),
            "kinds": [k.value for k in plan.kinds],
            "interrupted": interrupted,
            "runtime": {"workers": plan.workers,
                        "seconds": time.perf_counter() - t_start},
        }
        if extra_metadata:
            meta.update(extra_metadata)
        return SweepReport(results, aggregate_averages(full, plan.kinds),
                           rank_features(ds), meta, sorted(failures, key=lambda f: (
                               f["serial"], ModelKind(f["kind"]).index)))

    def record(serial: int, kind: ModelKind, fut: Future) -> None:
        exc = fut.exception()
        if exc is None:
            res = fut.result()
            done[(serial, kind.value)] = res
            logger.debug("serial %2d %-3s acc=%.4f f1=%.4f (%.2fs)", serial, kind.value,
                        res.accuracy, res.f1_weighted, res.seconds)
            if on_result:
                on_result(res)
            return
        if plan.keep_going:
            logger.error("serial %d %s failed: %s", serial, kind.value, exc)
            failures.append({"serial": serial, "kind": kind.value, "error": str(exc)})
            return
        raise SweepError(serial, kind.value, exc) from exc

    pool = ThreadPoolExecutor(max_workers=plan.workers, thread_name_prefix="sweep")
    pending: dict[Future, tuple[int, ModelKind]] = {}
    try:
        for serial, kind in todo:
            fut = pool.submit(_evaluate, train_ds, test_ds, serial, kind, plan, info)
            pending[fut] = (serial, kind)
        while pending:
            finished, _ = wait(list(pending), timeout=0.5, return_when=FIRST_COMPLETED)
            for fut in sorted(finished, key=lambda f: pending[f]):
                serial, kind = pending.pop(fut)
                record(serial, kind, fut)
    except KeyboardInterrupt:
        logger.warning("interrupted; draining %d in-flight runs", len(pending))
        pool.shutdown(wait=True, cancel_futures=True)
        for fut, (serial, kind) in list(pending.items()):
            if fut.done() and not fut.cancelled() and fut.exception() is None:
                record(serial, kind, fut)
        raise SweepInterrupted(build(interrupted=True)) from None
    except BaseException:
        pool.shutdown(wait=True, cancel_futures=True)
        raise
    pool.shutdown(wait=True)
    return build()
