"""Feature catalog: the five radio features and their 31 numbered combinations."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterator


class FeatureId(enum.Enum):
    """Candidate features in canonical order (value = canonical index)."""

    RSSI = 1
    SNR = 2
    FREQUENCY = 3
    HEIGHT = 4
    DISTANCE = 5

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def bit(self) -> int:
        return 1 << (self.value - 1)

    @classmethod
    def from_label(cls, label: str) -> "FeatureId":
        try:
            return _BY_LABEL[label.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown feature {label!r}") from None


_LABELS = {
    FeatureId.RSSI: "RSSI",
    FeatureId.SNR: "SNR",
    FeatureId.FREQUENCY: "Frequency",
    FeatureId.HEIGHT: "Height",
    FeatureId.DISTANCE: "Distance",
}
_BY_LABEL = {v.lower(): k for k, v in _LABELS.items()}

CANONICAL_ORDER: tuple[FeatureId, ...] = tuple(FeatureId)
FEATURE_NAMES: tuple[str, ...] = tuple(f.label for f in CANONICAL_ORDER)

# Row labels exactly as printed in the result tables. The triple ordering is
# not lexicographic, so this stays a literal table.
_SERIAL_LABELS: dict[int, str] = {
    1: "RSSI",
    2: "SNR",
    3: "Frequency",
    4: "Height",
    5: "Distance",
    6: "RSSI+SNR",
    7: "RSSI+Frequency",
    8: "RSSI+Height",
    9: "RSSI+Distance",
    10: "SNR+Frequency",
    11: "SNR+Height",
    12: "SNR+Distance",
    13: "Frequency+Height",
    14: "Frequency+Distance",
    15: "Height+Distance",
    16: "RSSI+SNR+Distance",
    17: "RSSI+SNR+Height",
    18: "RSSI+SNR+Frequency",
    19: "RSSI+Distance+Height",
    20: "RSSI+Distance+Frequency",
    21: "RSSI+Height+Frequency",
    22: "SNR+Distance+Height",
    23: "SNR+Distance+Frequency",
    24: "SNR+Frequency+Height",
    25: "Frequency+Distance+Height",
    26: "RSSI+SNR+Distance+Height",
    27: "RSSI+SNR+Distance+Frequency",
    28: "RSSI+SNR+Frequency+Height",
    29: "RSSI+Frequency+Distance+Height",
    30: "Frequency+SNR+Distance+Height",
    31: "RSSI+SNR+Frequency+Distance+Height",
}


@dataclass(frozen=True)
class FeatureSet:
    """A non-empty feature subset, stored as a 5-bit mask, with its serial number."""

    mask: int
    serial: int

    def __post_init__(self) -> None:
        if not 0 < self.mask < 32:
            raise ValueError(f"feature mask must be in 1..31, got {self.mask}")

    @property
    def members(self) -> tuple[FeatureId, ...]:
        """Members in canonical order (the column projection order)."""
        return tuple(f for f in CANONICAL_ORDER if self.mask & f.bit)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.members)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def label(self) -> str:
        return combo_label(self)

    def __contains__(self, feature: FeatureId) -> bool:
        return bool(self.mask & feature.bit)


def _mask_of(label: str) -> int:
    mask = 0
    for part in label.split("+"):
        mask |= FeatureId.from_label(part).bit
    return mask


class ComboCatalog:
    """The 31 feature sets, serial-ascending."""

    def __init__(self, sets: list[FeatureSet]):
        self._sets = sorted(sets, key=lambda fs: fs.serial)
        self._by_serial = {fs.serial: fs for fs in self._sets}
        self._by_mask = {fs.mask: fs for fs in self._sets}
        if len(self._by_serial) != len(self._sets) or len(self._by_mask) != len(self._sets):
            raise ValueError("catalog serials and masks must be unique")

    def __len__(self) -> int:
        return len(self._sets)

    def __iter__(self) -> Iterator[FeatureSet]:
        return iter(self._sets)

    def __getitem__(self, serial: int) -> FeatureSet:
        try:
            return self._by_serial[serial]
        except KeyError:
            raise KeyError(f"no feature combination with serial {serial}") from None

    @property
    def serials(self) -> list[int]:
        return [fs.serial for fs in self._sets]

    def by_mask(self, mask: int) -> FeatureSet:
        return self._by_mask[mask]

    def by_members(self, features) -> FeatureSet:
        mask = 0
        for f in features:
            mask |= (f if isinstance(f, FeatureId) else FeatureId.from_label(f)).bit
        return self._by_mask[mask]

    def of_size(self, size: int) -> list[FeatureSet]:
        return [fs for fs in self._sets if fs.size == size]

    def to_json(self) -> str:
        rows = [
            {"serial": fs.serial, "label": fs.label, "members": list(fs.names)}
            for fs in self._sets
        ]
        return json.dumps(rows, indent=2)


def combo_label(fs: FeatureSet) -> str:
    """Printed row label for ``fs`` (member order as in the tables, not canonical)."""
    return _SERIAL_LABELS[fs.serial]


def enumerate_combinations() -> ComboCatalog:
    """Return all 2**5 - 1 = 31 feature subsets with their table serial numbers."""
    return ComboCatalog([FeatureSet(_mask_of(lbl), s) for s, lbl in _SERIAL_LABELS.items()])


CATALOG = enumerate_combinations()
