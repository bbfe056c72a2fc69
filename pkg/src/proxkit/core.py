"""Shared domain types: distance classes, sensors, intervals, samples, datasets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RESAMPLE_STEPS = 150
DEFAULT_WINDOW_S = 4.0


class DistanceClass(enum.Enum):
    """The four transmitter/receiver separations used as class labels."""

    M1_2 = 1.2
    M1_8 = 1.8
    M3_0 = 3.0
    M4_5 = 4.5

    @property
    def meters(self) -> float:
        return self.value

    @property
    def index(self) -> int:
        return CLASSES.index(self)

    @classmethod
    def from_index(cls, i: int) -> "DistanceClass":
        return CLASSES[i]

    def __repr__(self) -> str:  # "DistanceClass.M1_8" is noisy in reports
        return f"<{self.value}m>"


CLASSES: tuple[DistanceClass, ...] = tuple(DistanceClass)
N_CLASSES = len(CLASSES)
CLASS_METERS = np.array([c.meters for c in CLASSES])


def class_from_meters(d: float) -> DistanceClass:
    """Map a distance in meters to the nearest class.

    Ties go to the smaller class (conservative for contact decisions);
    values outside the class range clamp to the nearest extreme.
    """
    if not math.isfinite(d):
        raise ValueError(f"distance must be finite, got {d!r}")
    best = CLASSES[0]
    best_gap = abs(d - best.meters)
    for c in CLASSES[1:]:
        gap = abs(d - c.meters)
        if gap < best_gap:
            best, best_gap = c, gap
    return best


class SensorKind(enum.Enum):
    """Sensor streams present in an interval; value is the log-file name."""

    BLUETOOTH = "bluetooth"
    ACCELEROMETER = "accelerometer"
    GYROSCOPE = "gyroscope"
    MAGNETOMETER = "magnetometer"
    ATTITUDE = "attitude"
    GRAVITY = "gravity"
    ALTITUDE = "altitude"
    COMPASS = "compass"

    @property
    def dim(self) -> int:
        return _SENSOR_DIMS[self]

    @property
    def offset(self) -> int:
        """First column of this sensor in the stacked feature layout."""
        return _SENSOR_OFFSETS[self]

    @property
    def columns(self) -> slice:
        return slice(self.offset, self.offset + self.dim)

    @classmethod
    def from_name(cls, name: str) -> "SensorKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown sensor name {name!r}") from None


_SENSOR_DIMS = {
    SensorKind.BLUETOOTH: 1,
    SensorKind.ACCELEROMETER: 3,
    SensorKind.GYROSCOPE: 3,
    SensorKind.MAGNETOMETER: 3,
    SensorKind.ATTITUDE: 3,  # roll, pitch, yaw in radians
    SensorKind.GRAVITY: 3,
    SensorKind.ALTITUDE: 1,  # atmospheric pressure proxy
    SensorKind.COMPASS: 1,  # single heading in degrees
}

SENSOR_ORDER: tuple[SensorKind, ...] = tuple(SensorKind)
_SENSOR_OFFSETS: dict[SensorKind, int] = {}
_off = 0
for _k in SENSOR_ORDER:
    _SENSOR_OFFSETS[_k] = _off
    _off += _SENSOR_DIMS[_k]
F_SENSOR = _off  # 18 stacked sensor channels
del _off, _k


@dataclass(frozen=True)
class SensorReading:
    """One timestamped observation from one sensor."""

    t: float
    kind: SensorKind
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.t) or self.t < 0:
            raise ValueError(f"reading time must be finite and >= 0, got {self.t!r}")
        if len(self.values) != self.kind.dim:
            raise ValueError(
                f"{self.kind.value} expects {self.kind.dim} values, got {len(self.values)}"
            )


@dataclass(frozen=True)
class ExperimentMeta:
    """Experiment-level context shared by all intervals of one session."""

    experiment_id: str
    site: str
    tx_model: str
    rx_model: str
    tx_power: str
    carriage: str


@dataclass(frozen=True)
class Interval:
    """A labeled fixed-duration segment of sensor readings between two phones."""

    meta: ExperimentMeta
    label: DistanceClass
    readings: tuple[SensorReading, ...]
    window: float = DEFAULT_WINDOW_S

    def __post_init__(self) -> None:
        if not self.readings:
            raise ValueError("interval must contain at least one reading")
        last = -math.inf
        for r in self.readings:
            if r.t < last:
                raise ValueError("readings must be sorted ascending by time")
            if r.t > self.window:
                raise ValueError(f"reading at t={r.t} exceeds window {self.window}")
            last = r.t

    def readings_of(self, kind: SensorKind) -> list[SensorReading]:
        return [r for r in self.readings if r.kind is kind]


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TimeSeriesSample:
    """150 x D matrix: normalized sensor features plus a per-row metadata one-hot."""

    matrix: np.ndarray
    label: DistanceClass
    site: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _freeze(self.matrix))
        if self.matrix.ndim != 2:
            raise ValueError("sample matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("sample matrix contains non-finite values")


@dataclass(frozen=True, eq=False)
class FlatSample:
    """Row-major concatenation of the sensor matrix plus one metadata one-hot copy."""

    vector: np.ndarray
    label: DistanceClass
    site: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", _freeze(self.vector))
        if self.vector.ndim != 1:
            raise ValueError("sample vector must be 1-D")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("sample vector contains non-finite values")


@dataclass(frozen=True, eq=False)
class HistogramSample:
    """Relative frequencies of BLE RSSI readings over fixed dBm buckets."""

    freqs: np.ndarray
    label: DistanceClass
    site: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "freqs", _freeze(self.freqs))
        total = float(self.freqs.sum())
        if np.any(self.freqs < 0) or np.any(self.freqs > 1):
            raise ValueError("histogram frequencies must lie in [0, 1]")
        if total != 0.0 and abs(total - 1.0) > 1e-9:
            raise ValueError(f"histogram frequencies must sum to 0 or 1, got {total}")


SAMPLE_KINDS = ("interval", "timeseries", "flat", "histogram")

_KIND_TYPES = {
    "interval": Interval,
    "timeseries": TimeSeriesSample,
    "flat": FlatSample,
    "histogram": HistogramSample,
}


@dataclass(eq=False)
class Dataset:
    """A homogeneous collection of samples plus the fitted encoders that built it.

    The normalizer is only ever fitted from a train split; eval datasets carry
    a reference to the train-fitted one so featurization stays comparable.
    """

    kind: str
    samples: tuple
    vocab: "object | None" = None  # features.MetadataVocab
    normalizer: "object | None" = None  # features.SensorScaler
    split_tag: str = "train"
    _features: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in SAMPLE_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        want = _KIND_TYPES[self.kind]
        self.samples = tuple(self.samples)
        for s in self.samples:
            if not isinstance(s, want):
                raise ValueError(
                    f"dataset of kind {self.kind!r} cannot hold {type(s).__name__}"
                )
        if self.split_tag not in ("train", "eval"):
            raise ValueError(f"split_tag must be 'train' or 'eval', got {self.split_tag!r}")

    def __len__(self) -> int:
        return len(self.samples)

    def features(self) -> np.ndarray:
        """Samples stacked into one array: (n, T, D), (n, L) or (n, B)."""
        if self.kind == "interval":
            raise ValueError("interval datasets have no stacked feature array")
        if self._features is None:
            if self.kind == "timeseries":
                arr = np.stack([s.matrix for s in self.samples])
            elif self.kind == "flat":
                arr = np.stack([s.vector for s in self.samples])
            else:
                arr = np.stack([s.freqs for s in self.samples])
            arr.setflags(write=False)
            self._features = arr
        return self._features

    def labels(self) -> list[DistanceClass]:
        return [s.label for s in self.samples]

    def label_indices(self) -> np.ndarray:
        return np.array([s.label.index for s in self.samples], dtype=np.int64)

    def label_meters(self) -> np.ndarray:
        return np.array([s.label.meters for s in self.samples])

    def sites(self) -> list[str]:
        if self.kind == "interval":
            return [s.meta.site for s in self.samples]
        return [s.site for s in self.samples]

    def replaced(self, samples: Iterable, kind: str | None = None) -> "Dataset":
        return Dataset(
            kind=kind or self.kind,
            samples=tuple(samples),
            vocab=self.vocab,
            normalizer=self.normalizer,
            split_tag=self.split_tag,
        )


class ModelKind(enum.Enum):
    """Trainable architectures; value is the CLI/report name."""

    FEEDFORWARD = "feedforward"
    GRU = "gru"
    CONV1D = "conv1d"
    CONV1D_DILATED = "conv1d_dilated"
    CONV1D_MAXPOOL = "conv1d_maxpool"
    CONVGRU = "convgru"
    CONVGRU_NOLINEAR = "convgru_nolinear"

    @classmethod
    def from_name(cls, name: str) -> "ModelKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown model kind {name!r}") from None


# Recurrent and convolutional kinds consume the 150-step representation;
# the feedforward net consumes the concatenated flat vector.
TEMPORAL_KINDS = frozenset(
    {
        ModelKind.GRU,
        ModelKind.CONV1D,
        ModelKind.CONV1D_DILATED,
        ModelKind.CONV1D_MAXPOOL,
        ModelKind.CONVGRU,
        ModelKind.CONVGRU_NOLINEAR,
    }
)


@dataclass(frozen=True)
class TrainPreset:
    """One hyperparameter row: architecture kind plus its training knobs."""

    model_kind: ModelKind
    num_layers: int
    epochs: int
    hidden_size: int
    learning_rate: float
    batch_size: int

    def __post_init__(self) -> None:
        for name in ("num_layers", "hidden_size", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"{name} must be a positive int, got {v!r}")
        # epochs=0 is allowed and means "initialize only, train nothing"
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ValueError(f"epochs must be a non-negative int, got {self.epochs!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate!r}")


@dataclass(frozen=True)
class NdcfResult:
    """Error rates and confusion counts under contact binarization."""

    p_fn: float
    p_fp: float
    w_fn: float
    w_fp: float
    ndcf: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def counts(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def onehot_label(label: DistanceClass) -> np.ndarray:
    v = np.zeros(N_CLASSES)
    v[label.index] = 1.0
    return v


def onehot_labels(indices: Sequence[int] | np.ndarray) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros((idx.shape[0], N_CLASSES))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out
