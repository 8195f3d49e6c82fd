"""Data model for charging snippets, windowing and channel standardization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SNIPPET_LENGTH = 128
DEFAULT_STRIDE = 64
N_CHANNELS = 8

CHANNELS = (
    "avg_cell_voltage",
    "current",
    "max_cell_voltage",
    "min_cell_voltage",
    "max_temp",
    "min_temp",
    "soc",
    "timestamp",
)
AVG_VOLT, CURRENT, MAX_VOLT, MIN_VOLT, MAX_TEMP, MIN_TEMP, SOC, TIMESTAMP = range(8)

# Everything except the timestamp is fed to the models.
MODEL_CHANNELS = (AVG_VOLT, CURRENT, MAX_VOLT, MIN_VOLT, MAX_TEMP, MIN_TEMP, SOC)

NORM_EPS = 1e-6


class RecordError(ValueError):
    """Raised for raw records that violate basic charging-record assumptions."""


@dataclass(frozen=True)
class ChargingSnippet:
    """One fixed-length window of an 8-channel charging record."""

    vehicle_id: str
    snippet_index: int
    mileage: float
    series: np.ndarray
    capacity_label: float | None = None

    def __post_init__(self):
        series = np.asarray(self.series, dtype=np.float64)
        if series.shape != (SNIPPET_LENGTH, N_CHANNELS):
            raise ValueError(
                f"series must be {SNIPPET_LENGTH}x{N_CHANNELS}, got {series.shape}")
        if self.snippet_index < 0:
            raise ValueError("snippet_index must be non-negative")
        if self.mileage < 0:
            raise ValueError("mileage must be non-negative")
        series.setflags(write=False)
        object.__setattr__(self, "series", series)

    def check_invariants(self, atol: float = 1e-9) -> list[str]:
        """Return a list of violated physical invariants (empty when valid)."""
        s = self.series
        problems = []
        if np.any(s[:, MIN_VOLT] > s[:, AVG_VOLT] + atol) or np.any(
                s[:, AVG_VOLT] > s[:, MAX_VOLT] + atol):
            problems.append("cell voltage ordering min <= avg <= max violated")
        if np.any(s[:, MIN_TEMP] > s[:, MAX_TEMP] + atol):
            problems.append("min_temp > max_temp")
        soc = s[:, SOC]
        if np.any(soc < -atol) or np.any(soc > 100 + atol):
            problems.append("soc outside [0, 100]")
        if np.any(np.diff(soc) < -atol):
            problems.append("soc decreases within snippet")
        if np.any(np.diff(s[:, TIMESTAMP]) <= 0):
            problems.append("timestamps not strictly increasing")
        return problems

    @property
    def has_capacity(self) -> bool:
        return self.capacity_label is not None


@dataclass(frozen=True)
class Vehicle:
    vehicle_id: str
    health_label: int
    snippets: tuple[ChargingSnippet, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.health_label not in (0, 1):
            raise ValueError("health_label must be 0 (normal) or 1 (anomalous)")
        snippets = tuple(self.snippets)
        for s in snippets:
            if s.vehicle_id != self.vehicle_id:
                raise ValueError(
                    f"snippet of {s.vehicle_id!r} attached to vehicle {self.vehicle_id!r}")
        object.__setattr__(self, "snippets", snippets)

    def __len__(self):
        return len(self.snippets)

    def stack(self, channels: Sequence[int] | None = None) -> np.ndarray:
        """All snippets as one (n, 128, c) array."""
        if not self.snippets:
            return np.empty((0, SNIPPET_LENGTH, N_CHANNELS if channels is None else len(channels)))
        arr = np.stack([s.series for s in self.snippets])
        return arr if channels is None else arr[:, :, list(channels)]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    eps: float = NORM_EPS

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.maximum(np.asarray(self.std, dtype=np.float64), self.eps)
        if mean.shape != (N_CHANNELS,) or std.shape != (N_CHANNELS,):
            raise ValueError("NormStats needs one mean/std per channel")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["mean"]), np.array(d["std"]), d.get("eps", NORM_EPS))


def extract_snippets(record, window: int = SNIPPET_LENGTH, stride: int = DEFAULT_STRIDE, *,
                     vehicle_id: str = "", mileage: float = 0.0, start_index: int = 0,
                     capacity_label: float | None = None) -> list[ChargingSnippet]:
    """Cut a variable-length (len, 8) charging record into sliding windows.

    Returns ``floor((len - window) / stride) + 1`` snippets, or an empty list
    when the record is shorter than one window.
    """
    if window != SNIPPET_LENGTH:
        raise ValueError(f"window must be {SNIPPET_LENGTH}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    record = np.asarray(record, dtype=np.float64)
    if record.ndim != 2 or record.shape[1] != N_CHANNELS:
        raise RecordError(f"record must have shape (len, {N_CHANNELS}), got {record.shape}")
    n = record.shape[0]
    if n < window:
        return []
    dt = np.diff(record[:, TIMESTAMP])
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0))
        raise RecordError(
            f"timestamps not strictly increasing at row {bad + 1} "
            f"({record[bad, TIMESTAMP]} -> {record[bad + 1, TIMESTAMP]})")
    offsets = range(0, n - window + 1, stride)
    return [
        ChargingSnippet(vehicle_id, start_index + i, mileage,
                        record[o:o + window].copy(), capacity_label)
        for i, o in enumerate(offsets)
    ]


def _as_array(snippets) -> np.ndarray:
    if isinstance(snippets, np.ndarray):
        return snippets
    return np.stack([s.series for s in snippets])


def fit_normalizer(training_snippets, eps: float = NORM_EPS) -> NormStats:
    """Per-channel population mean/std over every row of every snippet."""
    if len(training_snippets) == 0:
        raise ValueError("no training data")
    rows = _as_array(training_snippets).reshape(-1, N_CHANNELS)
    return NormStats(rows.mean(axis=0), rows.std(axis=0), eps)


def apply_normalizer(snippet, stats: NormStats) -> np.ndarray:
    """z-score a snippet (or a stacked array of snippets) channel-wise."""
    x = snippet.series if isinstance(snippet, ChargingSnippet) else np.asarray(snippet)
    return (x - stats.mean) / stats.std


def denormalize(x, stats: NormStats) -> np.ndarray:
    return np.asarray(x) * stats.std + stats.mean


@dataclass(frozen=True)
class DatasetStats:
    n_vehicles: int = 0
    n_anomalous: int = 0
    n_snippets: int = 0
    n_capacity_labels: int = 0

    def __add__(self, other: "DatasetStats") -> "DatasetStats":
        return DatasetStats(self.n_vehicles + other.n_vehicles,
                            self.n_anomalous + other.n_anomalous,
                            self.n_snippets + other.n_snippets,
                            self.n_capacity_labels + other.n_capacity_labels)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_stats(vehicles: Sequence[Vehicle]) -> DatasetStats:
    return DatasetStats(
        n_vehicles=len(vehicles),
        n_anomalous=sum(v.health_label for v in vehicles),
        n_snippets=sum(len(v.snippets) for v in vehicles),
        n_capacity_labels=sum(s.has_capacity for v in vehicles for s in v.snippets),
    )


def all_snippets(vehicles: Sequence[Vehicle]) -> list[ChargingSnippet]:
    return [s for v in vehicles for s in v.snippets]


class ProtocolError(RuntimeError):
    """Raised when data violates the evaluation protocol (e.g. anomalies in training)."""


def derive_seed(seed: int, *path: int) -> int:
    """Independent sub-seed for the component addressed by ``path``.

    Uses ``numpy.random.SeedSequence(seed, spawn_key=path)``, so e.g. the model
    of cross-validation round 3 gets ``derive_seed(seed, 1, 3)`` regardless of
    which other rounds run.
    """
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
