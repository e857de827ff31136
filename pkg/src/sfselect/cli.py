"""Command-line entry point: ingest, synth, sweep, rank, report.

Settings come from an optional JSON config file (``--config``); any flag
given on the command line overrides the file. Progress goes to stderr,
``--json`` summaries to stdout, everything else to files under ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .data import (ColumnMapping, Dataset, DatasetError, MissingColumnError,
                   SyntheticConfig, clean, generate_synthetic, label_histogram,
                   load_csv, write_csv)
from .metrics import EvalResult, rank_features
from .models import Hyperparams, ModelKind
from .report import IncompleteReportError, emit_all, emit_ranking
from .split import SplitSpec
from .sweep import SweepInterrupted, SweepPlan, SweepReport, run_sweep

logger = logging.getLogger("sfselect")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_WARNING, EXIT_INTERRUPTED = 0, 1, 2, 3, 130


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a command needs. ``dataset`` and ``synthetic`` are exclusive."""

    dataset: str | None = None
    synthetic: dict | None = None
    mapping: str | None = None
    hyperparams: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    serials: list[int] | None = None
    kinds: list[str] | None = None
    out: str = "out"
    workers: int = 1
    seed: int = 42
    log_level: str = "INFO"
    keep_going: bool = False
    resume: str | None = None
    strict: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def validate(self, need_data: bool) -> None:
        if self.dataset is not None and self.synthetic is not None:
            raise ConfigError("set exactly one of dataset and synthetic, not both")
        if need_data and self.dataset is None and self.synthetic is None:
            raise ConfigError("no input: give --dataset PATH or --synthetic")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def hyperparams_obj(self) -> Hyperparams:
        return Hyperparams.from_dict(self.hyperparams)

    def split_spec(self) -> SplitSpec:
        d = {"seed": self.seed, **self.split}
        return SplitSpec(**d)

    def plan(self) -> SweepPlan:
        return SweepPlan(
            serials=tuple(self.serials) if self.serials else tuple(range(1, 32)),
            kinds=tuple(ModelKind.parse(k) for k in self.kinds) if self.kinds
            else tuple(ModelKind),
            hyperparams=self.hyperparams_obj(),
            split=self.split_spec(),
            base_seed=self.seed,
            workers=self.workers,
            keep_going=self.keep_going,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _kind_list(text: str) -> list[str]:
    return [ModelKind.parse(k).value for k in text.split(",") if k.strip()]


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps unset flags out of the namespace so config values survive
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="JSON run config; flags override its values")
    g.add_argument("--out", help="output directory (default: out)")
    g.add_argument("--workers", type=int, help="parallel runs (default 1)")
    g.add_argument("--seed", type=int,
                   help="base seed for the split and per-run model seeds (default 42); "
                        "for synth, the generator seed")
    g.add_argument("--standardize", action="store_true", default=argparse.SUPPRESS,
                   help="z-score features for k-NN and MLR")
    g.add_argument("--serials", type=_int_list, help="e.g. 6 or 1-5,31")
    g.add_argument("--kinds", type=_kind_list, help="subset of KNN,DTC,MLR,RF")
    g.add_argument("--train-fraction", type=float, dest="train_fraction")
    g.add_argument("--stratified", action="store_true", default=argparse.SUPPRESS)
    g.add_argument("--keep-going", action="store_true", dest="keep_going",
                   default=argparse.SUPPRESS, help="record failed runs and continue")
    g.add_argument("--resume", help="reuse finished runs from report.json or runs.jsonl")
    g.add_argument("--json", action="store_true", default=False,
                   help="print a machine-readable summary on stdout")
    g.add_argument("--dataset", help="input CSV")
    g.add_argument("--mapping", help="column mapping JSON")
    g.add_argument("--synthetic", nargs="?", const="", metavar="CONFIG_JSON",
                   help="use the synthetic generator (optionally with a config file)")
    g.add_argument("--rows", type=int, help="synthetic row count")
    g.add_argument("--knn-max-train", type=int, dest="knn_max_train",
                   help="subsample the k-NN training set to this many rows")
    g.add_argument("--log-level", dest="log_level")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="sfselect", parents=[common],
        description="Feature-combination study for LoRaWAN spreading-factor prediction.")
    parser.add_argument("--version", action="version", version=f"sfselect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="load, clean and summarize a dataset")
    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset CSV")
    s.add_argument("--sigma", type=float, help="shadowing standard deviation in dB")
    s.add_argument("--output", help="CSV path (default: <out>/synthetic.csv)")
    sub.add_parser("sweep", parents=[common], help="run the 31 x 4 sweep")
    sub.add_parser("rank", parents=[common], help="Pearson feature ranking")
    r = sub.add_parser("report", parents=[common], help="render tables and figures")
    r.add_argument("--report", dest="report_path", help="report.json (default: <out>/report.json)")
    r.add_argument("--partial", action="store_true", help="render an incomplete sweep")
    return parser


def effective_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file (if any) with command-line overrides."""
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    cfg = RunConfig.from_dict(base)
    ns = vars(args)
    for name in ("out", "workers", "seed", "serials", "kinds", "keep_going", "resume",
                 "mapping", "log_level"):
        if name in ns:
            setattr(cfg, name, ns[name])
    if "dataset" in ns:
        cfg.dataset, cfg.synthetic = ns["dataset"], None
    if "synthetic" in ns:
        syn = {}
        if ns["synthetic"]:
            syn = json.loads(Path(ns["synthetic"]).read_text(encoding="utf-8"))
        cfg.synthetic, cfg.dataset = {**(cfg.synthetic or {}), **syn}, None
    if "rows" in ns:
        cfg.synthetic = {**(cfg.synthetic or {}), "n_rows": ns["rows"]}
    hp = dict(cfg.hyperparams)
    if "standardize" in ns:
        hp["standardize"] = True
    if "knn_max_train" in ns:
        hp["knn_max_train"] = ns["knn_max_train"]
    cfg.hyperparams = hp
    sp = dict(cfg.split)
    if "train_fraction" in ns:
        sp["train_fraction"] = ns["train_fraction"]
    if "stratified" in ns:
        sp["stratified"] = True
    cfg.split = sp
    if ns.get("partial"):
        cfg.strict = False
    return cfg


def _load_input(cfg: RunConfig) -> tuple[Dataset, dict]:
    if cfg.synthetic is not None:
        syn = SyntheticConfig.from_dict(cfg.synthetic)
        logger.info("generating %d synthetic rows (seed %d)", syn.n_rows, syn.seed)
        return generate_synthetic(syn), {"source": "synthetic", "synthetic": syn.to_dict()}
    mapping = ColumnMapping.from_json(cfg.mapping) if cfg.mapping else None
    raw = load_csv(cfg.dataset, mapping)
    ds, stats = clean(raw)
    logger.info("loaded %d rows, %d after cleaning", raw.n_rows, ds.n_rows)
    return ds, {"source": str(cfg.dataset), "load": asdict(raw.load_stats)
                if raw.load_stats else None, "clean": asdict(stats)}


def _emit(obj: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    else:
        for k, v in obj.items():
            print(f"{k}: {v if not isinstance(v, (dict, list)) else json.dumps(v)}",
                  file=sys.stderr)


def cmd_ingest(cfg: RunConfig, args) -> int:
    if cfg.dataset is None:
        raise ConfigError("ingest needs --dataset")
    mapping = ColumnMapping.from_json(cfg.mapping) if cfg.mapping else None
    raw = load_csv(cfg.dataset, mapping)
    summary = {"rows_read": raw.n_rows, "columns": list(raw.columns),
               "load": asdict(raw.load_stats) if raw.load_stats else None}
    if raw.n_rows == 0:
        summary.update(rows=0, warning="dataset has no data rows")
        _emit(summary, args.json)
        return EXIT_WARNING
    ds, stats = clean(raw)
    summary.update(rows=ds.n_rows, clean=asdict(stats),
                   labels={str(k): v for k, v in label_histogram(ds).items()},
                   dataset_hash=ds.content_hash())
    _emit(summary, args.json)
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    syn = dict(cfg.synthetic or {})
    ns = vars(args)
    if "seed" in ns:
        syn["seed"] = ns["seed"]
    if ns.get("sigma") is not None:
        syn["shadowing_sigma_db"] = ns["sigma"]
    sc = SyntheticConfig.from_dict(syn)
    ds = generate_synthetic(sc)
    path = Path(ns.get("output") or Path(cfg.out) / "synthetic.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    _emit({"path": str(path), "rows": ds.n_rows, "sha256": digest,
           "labels": {str(k): v for k, v in label_histogram(ds).items()},
           "config": sc.to_dict()}, args.json)
    return EXIT_OK


def _load_resume(path: str) -> list[EvalResult]:
    p = Path(path)
    if p.is_dir():
        p = p / "runs.jsonl" if (p / "runs.jsonl").exists() else p / "report.json"
    if p.suffix == ".jsonl":
        out = []
        for line in p.read_text(encoding="utf-8").splitlines():
            try:
                out.append(EvalResult.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError):
                # a torn final line from a killed process
                logger.warning("skipping unreadable checkpoint line in %s", p)
        return out
    return SweepReport.load(p).results


def _write_sweep(report: SweepReport, out: Path, cfg: RunConfig) -> None:
    report.save(out / "report.json")
    with open(out / "runs.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(report.to_csv_rows())
    emit_all(report, out, strict=cfg.strict and report.complete,
             effective_config=cfg.to_dict())


def cmd_sweep(cfg: RunConfig, args) -> int:
    plan = cfg.plan()
    ds, source = _load_input(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    prior = _load_resume(cfg.resume) if cfg.resume else None
    checkpoint = open(out / "runs.jsonl", "a", encoding="utf-8")
    total = len(plan)
    count = 0

    def on_result(r: EvalResult) -> None:
        nonlocal count
        count += 1
        checkpoint.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        checkpoint.flush()
        logger.info("[%d/%d] serial %d %s acc %.4f", count, total, r.serial, r.kind, r.accuracy)

    # invocation details (paths, workers) stay out of the report so resumed and
    # uninterrupted runs hash the same; metadata.json carries the full config
    extra = {"input": source}
    try:
        report = run_sweep(ds, plan, resume=prior, on_result=on_result, extra_metadata=extra)
    except SweepInterrupted as exc:
        _write_sweep(exc.report, out, replace(cfg, strict=False))
        logger.warning("interrupted: partial report with %d runs written to %s",
                       len(exc.report.results), out)
        _emit({"status": "interrupted", "runs": len(exc.report.results)}, args.json)
        return EXIT_INTERRUPTED
    finally:
        checkpoint.close()
    _write_sweep(report, out, cfg)
    summary = {"status": "failed" if report.failures else "ok",
               "runs": len(report.results), "failures": report.failures,
               "digest": report.digest(), "out": str(out)}
    _emit(summary, args.json)
    return EXIT_ERROR if report.failures else EXIT_OK


def cmd_rank(cfg: RunConfig, args) -> int:
    ds, _ = _load_input(cfg)
    cr = rank_features(ds)
    emit_ranking(cr, cfg.out)
    _emit({"ranking": [{"feature": e.feature, "r": e.r, "rank": e.rank,
                        "degenerate": e.degenerate} for e in cr.ranked()]}, args.json)
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    path = Path(getattr(args, "report_path", None) or Path(cfg.out) / "report.json")
    report = SweepReport.load(path)
    written = emit_all(report, cfg.out, strict=cfg.strict, effective_config=cfg.to_dict())
    _emit({"files": [str(p) for p in written], "complete": report.complete}, args.json)
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "sweep": cmd_sweep,
            "rank": cmd_rank, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    as_json = getattr(args, "json", False)
    try:
        cfg = effective_config(args)
        logging.basicConfig(level=cfg.log_level.upper(), stream=sys.stderr,
                            format="%(levelname)s %(message)s")
        cfg.validate(need_data=args.command in ("sweep", "rank"))
        return COMMANDS[args.command](cfg, args)
    except KeyboardInterrupt:
        _emit({"error": "interrupted"}, as_json)
        return EXIT_INTERRUPTED
    except (ConfigError, DatasetError, IncompleteReportError, OSError, ValueError,
            RuntimeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "serial", None) is not None:
            err.update(serial=exc.serial, kind=exc.kind)
        if isinstance(exc, MissingColumnError):
            err["column"] = exc.name
        print(json.dumps(err, sort_keys=True), file=sys.stdout if as_json else sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
