"""proxkit: BLE + mobile-sensor proximity estimation toolkit."""

from .core import (
    CLASSES,
    DistanceClass,
    Dataset,
    ExperimentMeta,
    F_SENSOR,
    FlatSample,
    HistogramSample,
    Interval,
    ModelKind,
    NdcfResult,
    SensorKind,
    SensorReading,
    TimeSeriesSample,
    TrainPreset,
    class_from_meters,
)
from .metrics import ContactRule, binarize, ndcf
from .presets import PRESETS, get_preset

__version__ = "0.1.0"

__all__ = [
    "CLASSES",
    "ContactRule",
    "Dataset",
    "DistanceClass",
    "ExperimentMeta",
    "F_SENSOR",
    "FlatSample",
    "HistogramSample",
    "Interval",
    "ModelKind",
    "NdcfResult",
    "PRESETS",
    "SensorKind",
    "SensorReading",
    "TimeSeriesSample",
    "TrainPreset",
    "binarize",
    "class_from_meters",
    "get_preset",
    "ndcf",
]
