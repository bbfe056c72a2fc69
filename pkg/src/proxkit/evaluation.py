"""Experiment harness: train/evaluate runs, the sensor-ablation study and the
regressor-vs-classifier comparison, all scored with the normalized decision
cost. Scoring primitives live in ``metrics`` and are re-exported here."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import GaussianNaiveBayes, RandomForestModel
from .core import Dataset, ModelKind, SENSOR_ORDER, SensorKind, TEMPORAL_KINDS, TrainPreset
from .features import HistogramSpec, build_timeseries_datasets, flatten_dataset, histogram_dataset
from .ioutil import atomic_write_text
from .metrics import ContactRule, accuracy, binarize, confusion_matrix, ndcf
from .nn.models import NeuralNetModel
from .presets import get_preset, preset_for_kind
from .validation import ConfigurationError

__all__ = [
    "AblationRow",
    "AblationSpec",
    "ContactRule",
    "ReportRow",
    "RfComparison",
    "accuracy",
    "ablate",
    "bench_grid",
    "binarize",
    "build_model",
    "compare_rf_modes",
    "confusion_matrix",
    "ndcf",
    "render_report_csv",
    "run_experiment",
    "write_history",
    "write_report",
]

BASELINE_MODELS = ("naive_bayes", "rf_classifier", "rf_regressor", "rf_histogram_regressor")
MODEL_NAMES = tuple(k.value for k in ModelKind) + BASELINE_MODELS

REPORT_COLUMNS = ("model", "train_set", "eval_set", "ndcf", "accuracy", "p_fn", "p_fp")


@dataclass(frozen=True)
class ReportRow:
    model: str
    train_set: str
    eval_set: str
    ndcf: float
    accuracy: float
    p_fn: float
    p_fp: float
    counts: dict

    def as_csv(self) -> list[str]:
        return [
            self.model,
            self.train_set,
            self.eval_set,
            repr(self.ndcf),
            repr(self.accuracy),
            repr(self.p_fn),
            repr(self.p_fp),
        ]


def dataset_tag(ds: Dataset) -> str:
    sites = sorted(set(ds.sites()))
    return "+".join(sites) if sites else ds.split_tag


def representation_for(model: str) -> str:
    """The representation built for a model in grid runs."""
    if model == "rf_histogram_regressor":
        return "histogram"
    if model in ("naive_bayes", "rf_classifier", "rf_regressor", "feedforward"):
        return "flat"
    return "timeseries"


def accepted_representations(model: str) -> tuple[str, ...]:
    # the statistical baselines consume any vector input; networks are pinned
    if model in ("naive_bayes", "rf_classifier", "rf_regressor", "rf_histogram_regressor"):
        return ("flat", "histogram")
    if model == "feedforward":
        return ("flat",)
    return ("timeseries",)


def build_model(
    model: str,
    seed: int,
    rule: ContactRule,
    preset: TrainPreset | None = None,
    forest_params: dict | None = None,
    mixup_alpha: float | None = None,
):
    """Instantiate (but do not fit) the estimator behind a model name."""
    if model in ("rf_classifier", "rf_regressor", "rf_histogram_regressor"):
        params = dict(forest_params or {})
        mode = "classify" if model == "rf_classifier" else "regress"
        return RandomForestModel(mode=mode, seed=seed, **params)
    if model == "naive_bayes":
        return GaussianNaiveBayes()
    kind = ModelKind.from_name(model)
    if preset is None:
        _, preset = preset_for_kind(kind)
    if preset.model_kind is not kind:
        raise ConfigurationError(
            f"preset is for {preset.model_kind.value!r}, not {model!r}"
        )
    return NeuralNetModel(preset=preset, seed=seed, rule=rule, mixup_alpha=mixup_alpha)


def _check_representation(model: str, ds: Dataset) -> None:
    accepted = accepted_representations(model)
    if ds.kind not in accepted:
        raise ConfigurationError(
            f"{model} consumes {' or '.join(accepted)} input, got {ds.kind!r}"
        )


def fit_targets(model_name: str, estimator, ds: Dataset) -> np.ndarray:
    regress = getattr(estimator, "mode", None) == "regress" or getattr(
        estimator, "task", None
    ) == "regress"
    return ds.label_meters() if regress else ds.label_indices()


def run_experiment(
    model,
    train: Dataset,
    eval_: Dataset,
    rule: ContactRule = ContactRule(),
    seed: int = 0,
    preset: TrainPreset | None = None,
    forest_params: dict | None = None,
    mixup_alpha: float | None = None,
) -> ReportRow:
    """Train one model, evaluate once on the eval split, emit one report row.

    ``model`` is either a known model name or a prebuilt estimator exposing
    ``fit(X, y)`` and ``predict_classes(X)``.
    """
    if isinstance(model, str):
        if model not in MODEL_NAMES:
            raise ConfigurationError(f"unknown model {model!r}; known: {MODEL_NAMES}")
        _check_representation(model, train)
        _check_representation(model, eval_)
        estimator = build_model(
            model, seed, rule, preset=preset, forest_params=forest_params, mixup_alpha=mixup_alpha
        )
        name = model
    else:
        estimator = model
        name = type(estimator).__name__
    if train.kind != eval_.kind:
        raise ConfigurationError(
            f"train ({train.kind}) and eval ({eval_.kind}) representations differ"
        )
    x_train = train.features()
    y_train = fit_targets(name, estimator, train)
    if isinstance(estimator, NeuralNetModel):
        estimator.fit(x_train, y_train, eval_data=(eval_.features(), eval_.label_indices()))
    else:
        estimator.fit(x_train, y_train)
    predictions = estimator.predict_classes(eval_.features())
    truths = eval_.labels()
    result = ndcf(predictions, truths, rule)
    return ReportRow(
        model=name,
        train_set=dataset_tag(train),
        eval_set=dataset_tag(eval_),
        ndcf=result.ndcf,
        accuracy=accuracy(predictions, truths),
        p_fn=result.p_fn,
        p_fp=result.p_fp,
        counts=result.counts,
    )


@dataclass(frozen=True)
class AblationSpec:
    """Which sensors stay in the pipeline and whether metadata is encoded."""

    sensors: tuple[SensorKind, ...]
    include_metadata: bool = True

    def __post_init__(self) -> None:
        if not self.sensors:
            raise ConfigurationError("ablation sensor subset must be non-empty")

    @classmethod
    def from_names(cls, names: Sequence[str], include_metadata: bool = True) -> "AblationSpec":
        return cls(
            sensors=tuple(SensorKind.from_name(n) for n in names),
            include_metadata=include_metadata,
        )

    def tag(self) -> str:
        names = "+".join(k.value for k in SENSOR_ORDER if k in self.sensors)
        return names + ("" if self.include_metadata else " (no metadata)")


@dataclass(frozen=True)
class AblationRow:
    sensors: str
    include_metadata: bool
    ndcf: float
    train_accuracy: float
    eval_accuracy: float
    accuracy_gap: float  # train minus eval: the overfitting signal


def ablate(
    specs: Sequence[AblationSpec],
    train_intervals: Dataset,
    eval_intervals: Dataset,
    model: str = "conv1d",
    preset: TrainPreset | None = None,
    rule: ContactRule = ContactRule(),
    seed: int = 0,
    forest_params: dict | None = None,
) -> list[AblationRow]:
    """Re-featurize with each sensor subset, retrain, and compare.

    Excluded sensors are zeroed column-wise in train and eval alike and the
    normalizer is refitted per subset, so shapes stay stable; dropping the
    metadata changes only the one-hot width.
    """
    if train_intervals.kind != "interval" or eval_intervals.kind != "interval":
        raise ConfigurationError("ablation runs from interval datasets (before featurization)")
    rows = []
    for spec in specs:
        train_ts, eval_ts, _, _ = build_timeseries_datasets(
            train_intervals.samples,
            eval_intervals.samples,
            train_intervals.vocab,
            sensors=spec.sensors,
            include_metadata=spec.include_metadata,
        )
        train_ds, eval_ds = train_ts, eval_ts
        if representation_for(model) == "flat":
            train_ds, eval_ds = flatten_dataset(train_ts), flatten_dataset(eval_ts)
        elif representation_for(model) == "histogram":
            raise ConfigurationError("sensor ablation is undefined for the histogram input")
        estimator = build_model(model, seed, rule, preset=preset, forest_params=forest_params)
        y_train = fit_targets(model, estimator, train_ds)
        estimator.fit(train_ds.features(), y_train)
        train_pred = estimator.predict_classes(train_ds.features())
        eval_pred = estimator.predict_classes(eval_ds.features())
        train_acc = accuracy(train_pred, train_ds.labels())
        eval_acc = accuracy(eval_pred, eval_ds.labels())
        rows.append(
            AblationRow(
                sensors=spec.tag(),
                include_metadata=spec.include_metadata,
                ndcf=ndcf(eval_pred, eval_ds.labels(), rule).ndcf,
                train_accuracy=train_acc,
                eval_accuracy=eval_acc,
                accuracy_gap=train_acc - eval_acc,
            )
        )
    return rows


@dataclass(frozen=True)
class RfComparison:
    classifier: ReportRow
    regressor: ReportRow

    @property
    def delta(self) -> float:
        """Classifier cost minus regressor cost; positive favors the regressor."""
        return self.classifier.ndcf - self.regressor.ndcf


def compare_rf_modes(
    train: Dataset,
    eval_: Dataset,
    rule: ContactRule = ContactRule(),
    seed: int = 0,
    subset_fraction: float | None = None,
    forest_params: dict | None = None,
) -> RfComparison:
    """Fit the forest as classifier and as regressor on identical data.

    ``subset_fraction`` optionally subsamples the train split first (both
    modes see the same subset), since full-data tree fits can be slow.
    """
    if subset_fraction is not None:
        if not 0.0 < subset_fraction <= 1.0:
            raise ConfigurationError(f"subset fraction must be in (0, 1], got {subset_fraction}")
        rng = np.random.default_rng(seed)
        n = max(1, int(round(subset_fraction * len(train))))
        take = np.sort(rng.permutation(len(train))[:n])
        train = train.replaced([train.samples[i] for i in take])
    row_c = run_experiment(
        "rf_classifier", train, eval_, rule, seed=seed, forest_params=forest_params
    )
    row_r = run_experiment(
        "rf_regressor", train, eval_, rule, seed=seed, forest_params=forest_params
    )
    return RfComparison(classifier=row_c, regressor=row_r)


def bench_grid(
    models: Sequence[str],
    train_intervals: Dataset,
    eval_intervals: Dataset,
    rule: ContactRule = ContactRule(),
    seed: int = 0,
    presets: dict[str, TrainPreset] | None = None,
    forest_params: dict | None = None,
    histogram_spec: HistogramSpec = HistogramSpec(),
) -> list[ReportRow]:
    """One results-table row per model, all from the same interval splits.

    Each representation is featurized once and shared by the models that
    consume it. ``presets`` optionally maps a model name to a preset row.
    """
    needed = {representation_for(m) for m in models}
    train_ts = eval_ts = train_flat = eval_flat = train_hist = eval_hist = None
    if needed & {"timeseries", "flat"}:
        train_ts, eval_ts, _, _ = build_timeseries_datasets(
            train_intervals.samples, eval_intervals.samples, train_intervals.vocab
        )
        if "flat" in needed:
            train_flat, eval_flat = flatten_dataset(train_ts), flatten_dataset(eval_ts)
    if "histogram" in needed:
        train_hist = histogram_dataset(train_intervals.samples, histogram_spec, "train")
        eval_hist = histogram_dataset(eval_intervals.samples, histogram_spec, "eval")
    by_kind = {
        "timeseries": (train_ts, eval_ts),
        "flat": (train_flat, eval_flat),
        "histogram": (train_hist, eval_hist),
    }
    rows = []
    for model in models:
        tr, ev = by_kind[representation_for(model)]
        preset = (presets or {}).get(model)
        rows.append(
            run_experiment(
                model, tr, ev, rule, seed=seed, preset=preset, forest_params=forest_params
            )
        )
    return rows


def render_report_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()


def write_report(path: str | Path, rows: Sequence[ReportRow]) -> None:
    atomic_write_text(path, render_report_csv(rows))


def write_ablation_report(path: str | Path, rows: Sequence[AblationRow]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["sensors", "include_metadata", "ndcf", "train_accuracy", "eval_accuracy", "accuracy_gap"]
    )
    for r in rows:
        writer.writerow(
            [
                r.sensors,
                int(r.include_metadata),
                repr(r.ndcf),
                repr(r.train_accuracy),
                repr(r.eval_accuracy),
                repr(r.accuracy_gap),
            ]
        )
    atomic_write_text(path, buf.getvalue())


def write_history(path: str | Path, history) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "eval_ndcf"])
    for rec in history:
        writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.eval_ndcf)])
    atomic_write_text(path, buf.getvalue())
