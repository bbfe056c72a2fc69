"""Single-file containers for preprocessed datasets and model checkpoints.

Layout: a magic line, one JSON header line (UTF-8), then the named arrays as
consecutive ``.npy`` blobs in header order. Everything is written through a
temp file and renamed, and the bytes depend only on the content, so a rerun
with identical inputs reproduces the file exactly.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .core import (
    CLASSES,
    Dataset,
    FlatSample,
    HistogramSample,
    ModelKind,
    TimeSeriesSample,
    TrainPreset,
)
from .baselines import GaussianNaiveBayes, RandomForestModel, TreeNodes
from .features import HistogramSpec, MetadataVocab, SensorScaler
from .ioutil import atomic_write_bytes
from .nn.models import NeuralNetModel, build_network

MAGIC = b"PROXKIT-CONTAINER-1\n"


def save_container(path: str | Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    header = dict(header)
    header["arrays"] = list(arrays)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(json.dumps(header, sort_keys=True).encode("utf-8"))
    buf.write(b"\n")
    for name in arrays:
        np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]))
    atomic_write_bytes(path, buf.getvalue())


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise ValueError(f"{path} is not a proxkit container (bad magic {magic!r})")
        header = json.loads(fh.readline().decode("utf-8"))
        arrays = {name: np.lib.format.read_array(fh) for name in header["arrays"]}
    return header, arrays


def _preset_to_dict(preset: TrainPreset) -> dict:
    return {
        "model_kind": preset.model_kind.value,
        "num_layers": preset.num_layers,
        "epochs": preset.epochs,
        "hidden_size": preset.hidden_size,
        "learning_rate": preset.learning_rate,
        "batch_size": preset.batch_size,
    }


def _preset_from_dict(payload: dict) -> TrainPreset:
    return TrainPreset(
        model_kind=ModelKind.from_name(payload["model_kind"]),
        num_layers=payload["num_layers"],
        epochs=payload["epochs"],
        hidden_size=payload["hidden_size"],
        learning_rate=payload["learning_rate"],
        batch_size=payload["batch_size"],
    )


def save_dataset(path: str | Path, ds: Dataset) -> None:
    if ds.kind == "interval":
        raise ValueError("interval datasets are raw inputs; persist logs + manifest instead")
    X = ds.features()
    header: dict = {
        "container": "dataset",
        "kind": ds.kind,
        "split_tag": ds.split_tag,
        "sites": ds.sites(),
        "vocab": ds.vocab.to_dict() if ds.vocab is not None else None,
        "normalizer": ds.normalizer.to_dict() if ds.normalizer is not None else None,
        "n_samples": len(ds),
    }
    if ds.kind == "timeseries":
        header["steps"], header["width"] = int(X.shape[1]), int(X.shape[2])
    else:
        header["width"] = int(X.shape[1])
    save_container(path, header, {"features": X, "labels": ds.label_indices()})


def load_dataset(path: str | Path) -> Dataset:
    header, arrays = load_container(path)
    if header.get("container") != "dataset":
        raise ValueError(f"{path} does not hold a dataset")
    X = arrays["features"]
    labels = [CLASSES[int(i)] for i in arrays["labels"]]
    sites = header["sites"]
    kind = header["kind"]
    if kind == "timeseries":
        samples = [TimeSeriesSample(x, lab, s) for x, lab, s in zip(X, labels, sites)]
    elif kind == "flat":
        samples = [FlatSample(x, lab, s) for x, lab, s in zip(X, labels, sites)]
    elif kind == "histogram":
        samples = [HistogramSample(x, lab, s) for x, lab, s in zip(X, labels, sites)]
    else:
        raise ValueError(f"unknown dataset kind {kind!r} in {path}")
    vocab = MetadataVocab.from_dict(header["vocab"]) if header["vocab"] else None
    normalizer = (
        SensorScaler.from_dict(header["normalizer"]) if header["normalizer"] else None
    )
    return Dataset(
        kind=kind,
        samples=samples,
        vocab=vocab,
        normalizer=normalizer,
        split_tag=header["split_tag"],
    )


def save_model(path: str | Path, model) -> None:
    if isinstance(model, NeuralNetModel):
        named = model.network_.named_params()
        header = {
            "container": "model",
            "model_format": "nn",
            "task": model.task,
            "seed": model.seed,
            "mixup_alpha": model.mixup_alpha,
            "preset": _preset_to_dict(model.preset),
            "input_shape": list(model.input_shape_),
            "n_outputs": model.n_outputs_,
        }
        save_container(path, header, {k: p.value for k, p in named.items()})
    elif isinstance(model, GaussianNaiveBayes):
        header = {"container": "model", "model_format": "gnb", "var_floor": model.var_floor}
        save_container(
            path,
            header,
            {"priors": model.priors_, "means": model.means_, "vars": model.vars_},
        )
    elif isinstance(model, RandomForestModel):
        offsets = np.cumsum([0] + [t.feature.shape[0] for t in model.trees_])
        header = {
            "container": "model",
            "model_format": "forest",
            "n_trees": model.n_trees,
            "max_depth": model.max_depth,
            "min_leaf": model.min_leaf,
            "mode": model.mode,
            "max_features": model.max_features,
            "bootstrap": model.bootstrap,
            "seed": model.seed,
        }
        arrays = {
            "offsets": offsets,
            "feature": np.concatenate([t.feature for t in model.trees_]),
            "threshold": np.concatenate([t.threshold for t in model.trees_]),
            "left": np.concatenate([t.left for t in model.trees_]),
            "right": np.concatenate([t.right for t in model.trees_]),
            "value": np.concatenate([t.value for t in model.trees_], axis=0),
        }
        save_container(path, header, arrays)
    else:
        raise ValueError(f"cannot persist model of type {type(model).__name__}")


def load_model(path: str | Path):
    header, arrays = load_container(path)
    if header.get("container") != "model":
        raise ValueError(f"{path} does not hold a model")
    fmt = header["model_format"]
    if fmt == "nn":
        preset = _preset_from_dict(header["preset"])
        model = NeuralNetModel(
            preset=preset,
            task=header["task"],
            seed=header["seed"],
            mixup_alpha=header["mixup_alpha"],
        )
        model.input_shape_ = tuple(header["input_shape"])
        model.n_outputs_ = header["n_outputs"]
        model.network_ = build_network(
            preset.model_kind,
            preset,
            model.input_shape_,
            model.n_outputs_,
            np.random.default_rng(0),
        )
        named = model.network_.named_params()
        if set(named) != set(header["arrays"]):
            raise ValueError(f"{path}: parameter names do not match the architecture")
        for name, param in named.items():
            stored = arrays[name]
            if stored.shape != param.value.shape:
                raise ValueError(
                    f"{path}: parameter {name} has shape {stored.shape}, expected {param.value.shape}"
                )
            param.value = stored.astype(np.float64)
        return model
    if fmt == "gnb":
        model = GaussianNaiveBayes(var_floor=header["var_floor"])
        model.priors_ = arrays["priors"]
        model.means_ = arrays["means"]
        model.vars_ = arrays["vars"]
        return model
    if fmt == "forest":
        model = RandomForestModel(
            n_trees=header["n_trees"],
            max_depth=header["max_depth"],
            min_leaf=header["min_leaf"],
            mode=header["mode"],
            max_features=header["max_features"],
            bootstrap=header["bootstrap"],
            seed=header["seed"],
        )
        offsets = arrays["offsets"]
        model.trees_ = []
        for i in range(len(offsets) - 1):
            lo, hi = offsets[i], offsets[i + 1]
            model.trees_.append(
                TreeNodes(
                    feature=arrays["feature"][lo:hi],
                    threshold=arrays["threshold"][lo:hi],
                    left=arrays["left"][lo:hi],
                    right=arrays["right"][lo:hi],
                    value=arrays["value"][lo:hi],
                )
            )
        return model
    raise ValueError(f"unknown model format {fmt!r} in {path}")
