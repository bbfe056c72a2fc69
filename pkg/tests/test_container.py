import numpy as np
import pytest

from proxkit.baselines import GaussianNaiveBayes, RandomForestModel
from proxkit.container import (
    load_container,
    load_dataset,
    load_model,
    save_container,
    save_dataset,
    save_model,
)
from proxkit.core import CLASSES, Dataset, ModelKind, TrainPreset
from proxkit.features import MetadataVocab, build_timeseries_datasets, flatten_dataset
from proxkit.nn.models import NeuralNetModel

from conftest import full_sensor_interval


def test_container_roundtrip_and_determinism(tmp_path, rng):
    header = {"container": "test", "note": "x"}
    arrays = {"a": rng.standard_normal((3, 4)), "b": np.arange(5)}
    path = tmp_path / "c.bin"
    save_container(path, header, arrays)
    back_header, back = load_container(path)
    assert back_header["note"] == "x"
    assert np.array_equal(back["a"], arrays["a"])
    assert np.array_equal(back["b"], arrays["b"])
    first = path.read_bytes()
    save_container(path, header, arrays)
    assert path.read_bytes() == first


def test_container_rejects_foreign_files(tmp_path):
    path = tmp_path / "not_a_container"
    path.write_bytes(b"something else\n")
    with pytest.raises(ValueError, match="magic"):
        load_container(path)


@pytest.fixture
def datasets(rng):
    ivs = [
        full_sensor_interval(rng, label=CLASSES[i % 4], experiment_id=f"e{i % 3}")
        for i in range(8)
    ]
    vocab = MetadataVocab.from_metas([iv.meta for iv in ivs])
    train, eval_, _, _ = build_timeseries_datasets(ivs[:6], ivs[6:], vocab)
    return train, eval_


def test_dataset_roundtrip_timeseries(tmp_path, datasets):
    train, _ = datasets
    path = tmp_path / "train.pxd"
    save_dataset(path, train)
    back = load_dataset(path)
    assert back.kind == "timeseries"
    assert back.split_tag == "train"
    assert np.array_equal(back.features(), train.features())
    assert back.labels() == train.labels()
    assert back.sites() == train.sites()
    assert back.vocab == train.vocab
    assert np.allclose(back.normalizer.mean_, train.normalizer.mean_)


def test_dataset_roundtrip_flat(tmp_path, datasets):
    train, _ = datasets
    flat = flatten_dataset(train)
    path = tmp_path / "flat.pxd"
    save_dataset(path, flat)
    back = load_dataset(path)
    assert back.kind == "flat"
    assert np.array_equal(back.features(), flat.features())


def test_interval_dataset_refuses_to_persist(tmp_path, rng):
    ds = Dataset(kind="interval", samples=[full_sensor_interval(rng)])
    with pytest.raises(ValueError):
        save_dataset(tmp_path / "x.pxd", ds)


def test_nn_checkpoint_roundtrip(tmp_path, rng):
    preset = TrainPreset(ModelKind.CONV1D, 1, 2, 8, 1e-3, 8)
    X = rng.standard_normal((16, 20, 5))
    y = rng.integers(0, 4, 16)
    model = NeuralNetModel(preset=preset, seed=1).fit(X, y)
    path = tmp_path / "model.pxm"
    save_model(path, model)
    back = load_model(path)
    Xt = rng.standard_normal((4, 20, 5))
    assert np.array_equal(back.predict_proba(Xt), model.predict_proba(Xt))
    assert back.preset == preset
    assert back.task == "classify"


def test_gnb_checkpoint_roundtrip(tmp_path, rng):
    X = rng.standard_normal((40, 6))
    y = np.repeat(np.arange(4), 10)
    model = GaussianNaiveBayes().fit(X, y)
    path = tmp_path / "gnb.pxm"
    save_model(path, model)
    back = load_model(path)
    Xt = rng.standard_normal((8, 6))
    assert np.array_equal(back.predict_proba(Xt), model.predict_proba(Xt))


def test_forest_checkpoint_roundtrip(tmp_path, rng):
    X = rng.standard_normal((30, 5))
    y = rng.integers(0, 4, 30).astype(float)
    model = RandomForestModel(n_trees=6, max_depth=4, seed=2).fit(X, y)
    path = tmp_path / "rf.pxm"
    save_model(path, model)
    back = load_model(path)
    Xt = rng.standard_normal((10, 5))
    assert np.array_equal(back.predict_proba(Xt), model.predict_proba(Xt))
    regress = RandomForestModel(n_trees=4, max_depth=3, mode="regress", seed=2).fit(X, 1.2 + y)
    save_model(path, regress)
    back = load_model(path)
    assert back.mode == "regress"
    assert np.array_equal(back.predict(Xt), regress.predict(Xt))
