"""Feature pipeline: 150-step resampling, normalization, one-hot metadata,
flat and histogram representations, and mix-up augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import (
    F_SENSOR,
    RESAMPLE_STEPS,
    SENSOR_ORDER,
    Dataset,
    ExperimentMeta,
    FlatSample,
    HistogramSample,
    Interval,
    SensorKind,
    TimeSeriesSample,
    onehot_label,
)
from .validation import check_array, check_fitted

STD_FLOOR = 1e-8
MIXUP_ALPHA = 0.2


@dataclass(frozen=True)
class ResampledInterval:
    """Raw 150 x 18 zero-order-hold matrix plus the sensors that were absent."""

    matrix: np.ndarray
    missing: tuple[SensorKind, ...]


def resample(interval: Interval, n_steps: int = RESAMPLE_STEPS) -> ResampledInterval:
    """Sample every sensor on a uniform mid-step grid with a zero-order hold.

    Grid times are t_i = (i + 0.5) * window / n_steps. Each row carries the
    latest reading of each sensor at or before t_i; steps before a sensor's
    first reading are back-filled with that first reading. Sensors with no
    readings at all produce zero columns and are flagged as missing.
    """
    grid = (np.arange(n_steps) + 0.5) * (interval.window / n_steps)
    matrix = np.zeros((n_steps, F_SENSOR))
    missing: list[SensorKind] = []
    by_kind: dict[SensorKind, list] = {k: [] for k in SENSOR_ORDER}
    for r in interval.readings:
        by_kind[r.kind].append(r)
    for kind in SENSOR_ORDER:
        readings = by_kind[kind]
        if not readings:
            missing.append(kind)
            continue
        times = np.array([r.t for r in readings])
        values = np.array([r.values for r in readings])
        idx = np.searchsorted(times, grid, side="right") - 1
        idx[idx < 0] = 0  # back-fill before the first reading
        matrix[:, kind.columns] = values[idx]
    return ResampledInterval(matrix=matrix, missing=tuple(missing))


class SensorScaler(BaseEstimator, TransformerMixin):
    """Per-feature standardization fitted on train-split sensor matrices.

    Uses population statistics so the transform is exactly invertible, with
    the standard deviation floored at ``epsilon``. When missing-sensor masks
    are supplied, a sensor's statistics come only from samples where it was
    present, and its columns are zeroed (not shifted) in masked samples.
    """

    def __init__(self, epsilon: float = STD_FLOOR):
        self.epsilon = epsilon
        self.mean_: np.ndarray | None = None
        self.std_: np.ndarray | None = None

    def fit(
        self,
        matrices: Sequence[np.ndarray],
        missing: Sequence[Iterable[SensorKind]] | None = None,
    ):
        matrices = list(matrices)
        if not matrices:
            raise ValueError("cannot fit a normalizer on an empty train list")
        width = matrices[0].shape[1]
        if missing is None:
            missing = [()] * len(matrices)
        if len(missing) != len(matrices):
            raise ValueError("one missing-sensor record is required per matrix")
        count = np.zeros(width)
        total = np.zeros(width)
        for m, miss in zip(matrices, missing):
            present = np.ones(width, dtype=bool)
            for kind in miss:
                present[kind.columns] = False
            total[present] += m.sum(axis=0)[present]
            count[present] += m.shape[0]
        if np.any(count == 0):
            # a sensor missing from every train sample: keep identity-ish stats
            count[count == 0] = 1.0
        mean = total / count
        sq = np.zeros(width)
        for m, miss in zip(matrices, missing):
            present = np.ones(width, dtype=bool)
            for kind in miss:
                present[kind.columns] = False
            d = m - mean
            sq[present] += (d * d).sum(axis=0)[present]
        std = np.sqrt(sq / count)
        self.mean_ = mean
        self.std_ = np.maximum(std, self.epsilon)
        return self

    def transform(
        self, matrix: np.ndarray, missing: Iterable[SensorKind] = ()
    ) -> np.ndarray:
        check_fitted(self, "mean_")
        out = (matrix - self.mean_) / self.std_
        for kind in missing:
            out[:, kind.columns] = 0.0
        return out

    def inverse_transform(self, matrix: np.ndarray) -> np.ndarray:
        check_fitted(self, "mean_")
        return matrix * self.std_ + self.mean_

    def to_dict(self) -> dict:
        check_fitted(self, "mean_")
        return {
            "epsilon": self.epsilon,
            "mean": self.mean_.tolist(),
            "std": self.std_.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SensorScaler":
        scaler = cls(epsilon=float(payload["epsilon"]))
        scaler.mean_ = np.asarray(payload["mean"], dtype=np.float64)
        scaler.std_ = np.asarray(payload["std"], dtype=np.float64)
        return scaler


# Categorical fields that become one-hot blocks; experiment_id and site are
# identifiers, not features.
VOCAB_FIELDS = ("tx_model", "rx_model", "tx_power", "carriage")


@dataclass(frozen=True)
class MetadataVocab:
    """Closed per-field vocabularies fixed at dataset-assembly time."""

    values: Mapping[str, tuple[str, ...]]

    @classmethod
    def from_metas(cls, metas: Iterable[ExperimentMeta]) -> "MetadataVocab":
        seen: dict[str, set] = {f: set() for f in VOCAB_FIELDS}
        for meta in metas:
            for f in VOCAB_FIELDS:
                seen[f].add(getattr(meta, f))
        return cls(values={f: tuple(sorted(seen[f])) for f in VOCAB_FIELDS})

    @property
    def width(self) -> int:
        return sum(len(v) for v in self.values.values())

    def encode(self, meta: ExperimentMeta) -> np.ndarray:
        blocks = []
        for f in VOCAB_FIELDS:
            vocab = self.values[f]
            value = getattr(meta, f)
            block = np.zeros(len(vocab))
            try:
                block[vocab.index(value)] = 1.0
            except ValueError:
                raise ValueError(
                    f"value {value!r} of field {f!r} is not in the fitted vocabulary"
                ) from None
            blocks.append(block)
        return np.concatenate(blocks) if blocks else np.zeros(0)

    def to_dict(self) -> dict:
        return {f: list(v) for f, v in self.values.items()}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "MetadataVocab":
        return cls(values={f: tuple(payload[f]) for f in VOCAB_FIELDS})


def to_timeseries(
    interval: Interval,
    scaler: SensorScaler,
    vocab: MetadataVocab | None,
    resampled: ResampledInterval | None = None,
    n_steps: int = RESAMPLE_STEPS,
) -> TimeSeriesSample:
    """Normalize the resampled matrix and append the metadata one-hot per row."""
    if resampled is None:
        resampled = resample(interval, n_steps)
    normalized = scaler.transform(resampled.matrix, resampled.missing)
    if vocab is not None:
        onehot = vocab.encode(interval.meta)
        normalized = np.hstack(
            [normalized, np.broadcast_to(onehot, (normalized.shape[0], onehot.shape[0]))]
        )
    return TimeSeriesSample(matrix=normalized, label=interval.label, site=interval.meta.site)


def to_flat(sample: TimeSeriesSample, n_sensor_features: int = F_SENSOR) -> FlatSample:
    """Concatenate rows of the sensor block and append one one-hot copy."""
    sensor_part = sample.matrix[:, :n_sensor_features].reshape(-1)
    onehot_part = sample.matrix[0, n_sensor_features:]
    return FlatSample(
        vector=np.concatenate([sensor_part, onehot_part]),
        label=sample.label,
        site=sample.site,
    )


@dataclass(frozen=True)
class HistogramSpec:
    """dBm bucket grid for the RSSI-frequency representation."""

    lo: float = -100.0
    hi: float = -30.0
    bucket_width: float = 5.0

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.bucket_width <= 0:
            raise ValueError(f"bucket width must be positive, got {self.bucket_width}")

    @property
    def n_buckets(self) -> int:
        return int(math.ceil((self.hi - self.lo) / self.bucket_width))


def to_histogram(interval: Interval, spec: HistogramSpec = HistogramSpec()) -> HistogramSample:
    """Relative frequencies of BLE readings per bucket; out-of-range clamps."""
    counts = np.zeros(spec.n_buckets)
    rssi = [r.values[0] for r in interval.readings if r.kind is SensorKind.BLUETOOTH]
    for v in rssi:
        b = int(math.floor((v - spec.lo) / spec.bucket_width))
        counts[min(max(b, 0), spec.n_buckets - 1)] += 1.0
    if rssi:
        counts /= len(rssi)
    return HistogramSample(freqs=counts, label=interval.label, site=interval.meta.site)


def mixup(a: FlatSample, b: FlatSample, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Convex combination of two flat samples and of their one-hot labels."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if a.vector.shape != b.vector.shape:
        raise ValueError(
            f"mix-up needs equal vector lengths, got {a.vector.shape} and {b.vector.shape}"
        )
    vector = lam * a.vector + (1.0 - lam) * b.vector
    label = lam * onehot_label(a.label) + (1.0 - lam) * onehot_label(b.label)
    return vector, label


def draw_mixup_lambda(rng: np.random.Generator, alpha: float = MIXUP_ALPHA) -> float:
    return float(rng.beta(alpha, alpha))


@dataclass
class FeaturizeReport:
    """Bookkeeping from one featurization pass (the missing-sensor mask report)."""

    n_train: int = 0
    n_eval: int = 0
    missing_by_kind: dict = field(default_factory=dict)

    def record(self, missing: tuple[SensorKind, ...]) -> None:
        for kind in missing:
            self.missing_by_kind[kind.value] = self.missing_by_kind.get(kind.value, 0) + 1


def build_timeseries_datasets(
    train_intervals: Sequence[Interval],
    eval_intervals: Sequence[Interval],
    vocab: MetadataVocab | None,
    sensors: Iterable[SensorKind] | None = None,
    include_metadata: bool = True,
    n_steps: int = RESAMPLE_STEPS,
    epsilon: float = STD_FLOOR,
) -> tuple[Dataset, Dataset, SensorScaler, FeaturizeReport]:
    """Resample, normalize (train-fitted) and encode both splits consistently.

    ``sensors``, when given, restricts the pipeline to that subset by zeroing
    the other sensors' raw columns before the normalizer is fitted, which is
    how ablation runs keep tensor shapes stable.
    """
    if not train_intervals:
        raise ValueError("train split is empty")
    excluded: tuple[SensorKind, ...] = ()
    if sensors is not None:
        included = frozenset(sensors)
        if not included:
            raise ValueError("sensor subset must be non-empty")
        excluded = tuple(k for k in SENSOR_ORDER if k not in included)

    report = FeaturizeReport()

    def prepare(intervals: Sequence[Interval]) -> list[ResampledInterval]:
        out = []
        for interval in intervals:
            r = resample(interval, n_steps)
            report.record(r.missing)
            if excluded:
                m = r.matrix.copy()
                for kind in excluded:
                    m[:, kind.columns] = 0.0
                r = ResampledInterval(matrix=m, missing=r.missing)
            out.append(r)
        return out

    train_raw = prepare(train_intervals)
    eval_raw = prepare(eval_intervals)
    scaler = SensorScaler(epsilon=epsilon)
    scaler.fit([r.matrix for r in train_raw], [r.missing for r in train_raw])
    used_vocab = vocab if include_metadata else None

    def finish(intervals, raws, tag) -> Dataset:
        samples = [
            to_timeseries(iv, scaler, used_vocab, resampled=raw, n_steps=n_steps)
            for iv, raw in zip(intervals, raws)
        ]
        return Dataset(
            kind="timeseries",
            samples=samples,
            vocab=used_vocab,
            normalizer=scaler,
            split_tag=tag,
        )

    train_ds = finish(train_intervals, train_raw, "train")
    eval_ds = finish(eval_intervals, eval_raw, "eval")
    report.n_train = len(train_ds)
    report.n_eval = len(eval_ds)
    return train_ds, eval_ds, scaler, report


def flatten_dataset(ds: Dataset) -> Dataset:
    if ds.kind != "timeseries":
        raise ValueError(f"can only flatten timeseries datasets, got {ds.kind!r}")
    return ds.replaced((to_flat(s) for s in ds.samples), kind="flat")


def histogram_dataset(
    intervals: Sequence[Interval], spec: HistogramSpec, split_tag: str
) -> Dataset:
    return Dataset(
        kind="histogram",
        samples=[to_histogram(iv, spec) for iv in intervals],
        split_tag=split_tag,
    )
