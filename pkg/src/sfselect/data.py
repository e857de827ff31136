"""Dataset loading, cleaning, feature projection and a synthetic LoRaWAN generator."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FEATURE_NAMES, FeatureSet

logger = logging.getLogger(__name__)

SF_CLASSES = (7, 8, 9, 10, 11, 12)


class DatasetError(ValueError):
    """Invalid or unusable dataset input."""


class MissingColumnError(DatasetError):
    def __init__(self, name: str, where: str = "CSV header"):
        super().__init__(f"column {name!r} not found in {where}")
        self.name = name


@dataclass(frozen=True)
class ColumnMapping:
    """CSV header name bound to each logical column."""

    rssi_dBm: str = "rssi"
    snr_dB: str = "snr"
    frequency_Hz: str = "frequency"
    antenna_height_ed_m: str = "ed_height"
    distance_m: str = "distance"
    sf_label: str = "sf"

    def __post_init__(self) -> None:
        names = [getattr(self, f.name) for f in fields(self)]
        if len(set(names)) != len(names):
            raise DatasetError(f"column mapping binds duplicate header names: {names}")

    @property
    def feature_headers(self) -> tuple[str, ...]:
        """Header names in canonical feature order (RSSI, SNR, Frequency, Height, Distance)."""
        return (self.rssi_dBm, self.snr_dB, self.frequency_Hz,
                self.antenna_height_ed_m, self.distance_m)

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMapping":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DatasetError(f"unknown mapping keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ColumnMapping":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "ColumnMapping":
        text = resources.files("sfselect").joinpath("default_mapping.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LoadStats:
    rows_read: int
    rows_kept: int
    rejected: dict[str, int]

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of float64 feature columns plus integer SF labels.

    ``X`` has shape ``(n_rows, len(columns))``; ``y`` holds SF values 7..12.
    """

    columns: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    load_stats: LoadStats | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            X = X.reshape(len(y), len(self.columns))
        if X.shape != (len(y), len(self.columns)):
            raise DatasetError(
                f"shape mismatch: X {X.shape}, y {y.shape}, {len(self.columns)} columns")
        if len(set(self.columns)) != len(self.columns):
            raise DatasetError(f"duplicate column names: {self.columns}")
        bad = ~np.isin(y, SF_CLASSES)
        if bad.any():
            raise DatasetError(f"labels outside SF7..SF12: {sorted(set(y[bad].tolist()))}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def __len__(self) -> int:
        return len(self.y)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.columns == other.columns
                and self.X.shape == other.X.shape
                and self.X.tobytes() == other.X.tobytes()
                and np.array_equal(self.y, other.y))

    __hash__ = None  # type: ignore[assignment]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.columns.index(name)]
        except ValueError:
            raise MissingColumnError(name, "dataset") from None

    def take(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.columns, self.X[indices], self.y[indices])

    def label_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.y, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def content_hash(self) -> str:
        """SHA-256 over column names, feature bytes and labels."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.columns).encode())
        h.update(np.int64(self.X.shape[0]).tobytes())
        h.update(self.X.tobytes())
        h.update(self.y.tobytes())
        return h.hexdigest()


def _parse_sf(text: str) -> int | None:
    s = text.strip()
    if s[:2].lower() == "sf":
        s = s[2:]
    try:
        v = float(s)
    except ValueError:
        return None
    if not math.isfinite(v) or v != int(v):
        return None
    return int(v)


def load_csv(path: str | Path, mapping: ColumnMapping | None = None) -> Dataset:
    """Read a LoRaWAN CSV into a 5-feature :class:`Dataset`.

    Unmapped columns are ignored. Empty feature cells become NaN (left for
    :func:`clean`); rows with non-numeric feature text, an unparseable SF or an
    SF outside 7..12 are rejected and counted in ``Dataset.load_stats``.
    """
    mapping = mapping or ColumnMapping.default()
    path = Path(path)
    rejected = {"non_numeric": 0, "bad_label": 0, "sf_out_of_range": 0, "short_row": 0}
    rows: list[list[float]] = []
    labels: list[int] = []
    n_read = 0
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: no header row") from None
        pos = {name: i for i, name in enumerate(header)}
        for name in (*mapping.feature_headers, mapping.sf_label):
            if name not in pos:
                raise MissingColumnError(name)
        feat_idx = [pos[h] for h in mapping.feature_headers]
        sf_idx = pos[mapping.sf_label]
        need = max(*feat_idx, sf_idx) + 1
        for rec in reader:
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            n_read += 1
            if len(rec) < need:
                rejected["short_row"] += 1
                continue
            values = []
            for i in feat_idx:
                cell = rec[i].strip()
                if not cell:
                    values.append(math.nan)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    values = None
                    break
            if values is None:
                rejected["non_numeric"] += 1
                continue
            sf = _parse_sf(rec[sf_idx])
            if sf is None:
                rejected["bad_label"] += 1
                continue
            if sf not in SF_CLASSES:
                rejected["sf_out_of_range"] += 1
                continue
            rows.append(values)
            labels.append(sf)
    stats = LoadStats(n_read, len(labels), rejected)
    if stats.rejected_total:
        logger.warning("%s: rejected %d of %d rows %s", path, stats.rejected_total, n_read,
                       {k: v for k, v in rejected.items() if v})
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(FEATURE_NAMES))
    return Dataset(FEATURE_NAMES, X, np.array(labels, dtype=np.int64), load_stats=stats)


def write_csv(ds: Dataset, path: str | Path, mapping: ColumnMapping | None = None) -> None:
    """Write ``ds`` so that ``load_csv`` restores it bit-exactly (repr floats)."""
    mapping = mapping or ColumnMapping.default()
    headers = dict(zip(FEATURE_NAMES, mapping.feature_headers))
    try:
        out_cols = [headers[c] for c in ds.columns]
    except KeyError as e:
        raise MissingColumnError(str(e.args[0]), "column mapping") from None
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*out_cols, mapping.sf_label])
        for row, label in zip(ds.X.tolist(), ds.y.tolist()):
            w.writerow([*map(repr, row), label])


@dataclass(frozen=True)
class CleanStats:
    rows_in: int
    rows_out: int
    dropped: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def clean(ds: Dataset) -> tuple[Dataset, CleanStats]:
    """Drop rows with NaN or Inf in any column, preserving row order.

    A row holding both is counted under ``nan``. Raises :class:`DatasetError`
    when nothing survives.
    """
    has_nan = np.isnan(ds.X).any(axis=1)
    has_inf = np.isinf(ds.X).any(axis=1)
    keep = ~(has_nan | has_inf)
    stats = CleanStats(
        rows_in=ds.n_rows,
        rows_out=int(keep.sum()),
        dropped={"nan": int(has_nan.sum()), "inf": int((has_inf & ~has_nan).sum())},
    )
    if stats.rows_out == 0:
        raise DatasetError("dataset is empty after cleaning")
    if stats.rows_out == ds.n_rows:
        return ds, stats
    return ds.take(np.flatnonzero(keep)), stats


def select_features(ds: Dataset, fs: FeatureSet) -> Dataset:
    """Project ``ds`` onto the members of ``fs`` in canonical feature order."""
    idx = []
    for name in fs.names:
        if name not in ds.columns:
            raise MissingColumnError(name, "dataset")
        idx.append(ds.columns.index(name))
    return Dataset(fs.names, ds.X[:, idx], ds.y)


# --------------------------------------------------------------------------
# Synthetic generator
# --------------------------------------------------------------------------

DEFAULT_SNR_THRESHOLDS = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}


@dataclass(frozen=True)
class SyntheticConfig:
    """Log-distance channel parameters for :func:`generate_synthetic`.

    ``height_gain_db_per_m`` adds a linear antenna-height gain to the received
    power; set it to 0 for the plain log-distance model.
    """

    n_rows: int = 20_000
    seed: int = 7
    path_loss_exponent: float = 3.0
    pl0_db: float = 40.0
    shadowing_sigma_db: float = 4.0
    tx_power_dbm: float = 14.0
    noise_floor_dbm: float = -117.0
    snr_jitter_db: float = 1.0
    distance_range_m: tuple[float, float] = (1000.0, 10000.0)
    distance_sampling: str = "log-uniform"
    heights_m: tuple[float, ...] = (1.0, 2.0, 3.0)
    height_gain_db_per_m: float = 2.0
    frequencies_hz: tuple[float, ...] = (868.1e6, 868.3e6, 868.5e6)
    snr_thresholds_db: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_SNR_THRESHOLDS))

    def __post_init__(self) -> None:
        object.__setattr__(self, "distance_range_m", tuple(map(float, self.distance_range_m)))
        object.__setattr__(self, "heights_m", tuple(map(float, self.heights_m)))
        object.__setattr__(self, "frequencies_hz", tuple(map(float, self.frequencies_hz)))
        object.__setattr__(self, "snr_thresholds_db",
                           {int(k): float(v) for k, v in self.snr_thresholds_db.items()})
        if self.n_rows <= 0:
            raise DatasetError("n_rows must be positive")
        if self.shadowing_sigma_db < 0 or self.snr_jitter_db < 0:
            raise DatasetError("noise standard deviations must be >= 0")
        lo, hi = self.distance_range_m
        if not 0 < lo <= hi:
            raise DatasetError(f"bad distance range {self.distance_range_m}")
        if self.distance_sampling not in ("log-uniform", "uniform"):
            raise DatasetError(f"unknown distance_sampling {self.distance_sampling!r}")
        if not self.heights_m or not self.frequencies_hz:
            raise DatasetError("heights and frequencies must be non-empty")
        if sorted(self.snr_thresholds_db) != list(SF_CLASSES):
            raise DatasetError("threshold table needs exactly SF7..SF12")
        thr = [self.snr_thresholds_db[sf] for sf in SF_CLASSES]
        if any(a <= b for a, b in zip(thr, thr[1:])):
            raise DatasetError("SNR thresholds must strictly decrease from SF7 to SF12")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DatasetError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_thresholds_db"] = {str(k): v for k, v in self.snr_thresholds_db.items()}
        return d


def sf_from_snr(snr: np.ndarray, thresholds: dict[int, float] | None = None) -> np.ndarray:
    """Smallest SF whose demodulation floor is <= SNR; SF12 when none is."""
    thresholds = thresholds or DEFAULT_SNR_THRESHOLDS
    snr = np.asarray(snr, dtype=np.float64)
    out = np.full(snr.shape, 12, dtype=np.int64)
    for sf in reversed(SF_CLASSES):
        out[snr >= thresholds[sf]] = sf
    return out


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Draw a LoRaWAN-like dataset whose SF is a threshold function of SNR."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_rows
    lo, hi = cfg.distance_range_m
    if cfg.distance_sampling == "log-uniform":
        d = 10.0 ** rng.uniform(math.log10(lo), math.log10(hi), n)
    else:
        d = rng.uniform(lo, hi, n)
    height = rng.choice(np.array(cfg.heights_m), n)
    freq = rng.choice(np.array(cfg.frequencies_hz), n)
    shadow = cfg.shadowing_sigma_db * rng.standard_normal(n)
    jitter = cfg.snr_jitter_db * rng.standard_normal(n)

    path_loss = cfg.pl0_db + 10.0 * cfg.path_loss_exponent * np.log10(d) + shadow
    rssi = cfg.tx_power_dbm - path_loss + cfg.height_gain_db_per_m * height
    snr = rssi - cfg.noise_floor_dbm + jitter
    sf = sf_from_snr(snr, cfg.snr_thresholds_db)

    X = np.column_stack([rssi, snr, freq, height, d])
    return Dataset(FEATURE_NAMES, X, sf)


def label_histogram(ds: Dataset) -> dict[int, int]:
    counts = ds.label_counts()
    return {sf: counts.get(sf, 0) for sf in SF_CLASSES}


def require_features(ds: Dataset, names: Sequence[str] = FEATURE_NAMES) -> None:
    for name in names:
        if name not in ds.columns:
            raise MissingColumnError(name, "dataset")

