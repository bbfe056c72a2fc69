import numpy as np
import pytest

from proxkit.core import (
    CLASSES,
    DistanceClass,
    F_SENSOR,
    FlatSample,
    SensorKind,
    SensorReading,
    TimeSeriesSample,
)
from proxkit.features import (
    HistogramSpec,
    MetadataVocab,
    SensorScaler,
    build_timeseries_datasets,
    draw_mixup_lambda,
    flatten_dataset,
    mixup,
    resample,
    to_flat,
    to_histogram,
    to_timeseries,
)

from conftest import ble_reading, full_sensor_interval, make_interval, meta

BT = SensorKind.BLUETOOTH


def test_resample_constant_hold():
    iv = make_interval([ble_reading(0.0, -60.0)])
    out = resample(iv)
    assert out.matrix.shape == (150, 18)
    assert np.all(out.matrix[:, BT.offset] == -60.0)
    assert set(out.missing) == set(SensorKind) - {BT}


def test_resample_two_reading_hold_switches_at_step_75():
    # grid t_i = (i + 0.5) * 4 / 150; t_74 < 2.0 <= t_75
    iv = make_interval([ble_reading(0.0, -50.0), ble_reading(2.0, -70.0)])
    col = resample(iv).matrix[:, BT.offset]
    assert np.all(col[:75] == -50.0)
    assert np.all(col[75:] == -70.0)


def test_resample_backfills_before_first_reading():
    iv = make_interval([ble_reading(3.9, -42.0)])
    col = resample(iv).matrix[:, BT.offset]
    assert np.all(col == -42.0)


def test_resample_missing_sensor_is_zero_and_flagged(rng):
    iv = full_sensor_interval(rng)
    readings = [r for r in iv.readings if r.kind is not SensorKind.GYROSCOPE]
    iv2 = make_interval(readings)
    out = resample(iv2)
    assert np.all(out.matrix[:, SensorKind.GYROSCOPE.columns] == 0.0)
    assert out.missing == (SensorKind.GYROSCOPE,)


def test_resample_matches_bruteforce_latest_reading_scan(rng):
    iv = full_sensor_interval(rng, n_per_kind=7)
    out = resample(iv)
    window = iv.window
    for i in (0, 1, 42, 99, 149):
        t_i = (i + 0.5) * window / 150
        for kind in SensorKind:
            readings = [r for r in iv.readings if r.kind is kind]
            eligible = [r for r in readings if r.t <= t_i]
            expected = (eligible[-1] if eligible else readings[0]).values
            assert np.allclose(out.matrix[i, kind.columns], expected)


def test_scaler_constant_column_floors_std():
    scaler = SensorScaler()
    scaler.fit([np.zeros((10, 18))])
    assert np.all(scaler.mean_ == 0.0)
    assert np.all(scaler.std_ == scaler.epsilon)


def test_scaler_symmetric_pair():
    m = np.zeros((2, 18))
    m[0, 0], m[1, 0] = -1.0, 1.0
    scaler = SensorScaler().fit([m])
    assert scaler.mean_[0] == 0.0
    assert scaler.std_[0] == 1.0


def test_scaler_population_std_hand_case():
    m = np.zeros((2, 18))
    m[0, 0], m[1, 0] = 0.0, 2.0
    scaler = SensorScaler().fit([m])
    assert scaler.mean_[0] == 1.0
    assert scaler.std_[0] == 1.0  # population convention, not n-1


def test_scaler_roundtrip_is_identity(rng):
    mats = [rng.normal(-50, 7, (20, 18)) for _ in range(5)]
    scaler = SensorScaler().fit(mats)
    x = mats[2]
    back = scaler.inverse_transform(scaler.transform(x))
    assert np.allclose(back, x, atol=1e-9)


def test_scaler_centering_maps_mean_to_zero(rng):
    mats = [rng.normal(3, 2, (15, 18)) for _ in range(3)]
    scaler = SensorScaler().fit(mats)
    z = scaler.transform(np.tile(scaler.mean_, (4, 1)))
    assert np.allclose(z, 0.0, atol=1e-12)


def test_scaler_empty_input_errors():
    with pytest.raises(ValueError):
        SensorScaler().fit([])


def test_scaler_mask_aware_fit_ignores_missing_samples(rng):
    present = rng.normal(-50, 5, (10, 18))
    absent = np.zeros((10, 18))
    scaler = SensorScaler().fit([present, absent], [(), tuple(SensorKind)])
    only = SensorScaler().fit([present])
    assert np.allclose(scaler.mean_, only.mean_)
    assert np.allclose(scaler.std_, only.std_)
    z = scaler.transform(absent, tuple(SensorKind))
    assert np.all(z == 0.0)


def test_vocab_one_hot_encoding():
    metas = [meta(tx_model="a"), meta(tx_model="b"), meta(tx_model="c")]
    vocab = MetadataVocab.from_metas(metas)
    enc = vocab.encode(meta(tx_model="b"))
    assert enc.shape == (vocab.width,)
    block = enc[: 3]  # tx_model block is first and sorted: a, b, c
    assert block.tolist() == [0.0, 1.0, 0.0]
    with pytest.raises(ValueError, match="tx_model"):
        vocab.encode(meta(tx_model="unseen"))


def test_to_timeseries_appends_onehot_to_every_row(rng):
    ivs = [full_sensor_interval(rng, tx_model=m) for m in ("a", "b")]
    vocab = MetadataVocab.from_metas([iv.meta for iv in ivs])
    scaler = SensorScaler().fit([resample(iv).matrix for iv in ivs])
    s = to_timeseries(ivs[1], scaler, vocab)
    assert s.matrix.shape == (150, 18 + vocab.width)
    onehot = vocab.encode(ivs[1].meta)
    assert np.all(s.matrix[:, 18:] == onehot)


def test_to_flat_layout_and_passthrough():
    # 2-step toy: rows [a], [b] with one-hot (1, 0) -> (a, b, 1, 0)
    matrix = np.array([[5.0, 1.0, 0.0], [7.0, 1.0, 0.0]])
    ts = TimeSeriesSample(matrix=matrix, label=DistanceClass.M3_0, site="x")
    flat = to_flat(ts, n_sensor_features=1)
    assert flat.vector.tolist() == [5.0, 7.0, 1.0, 0.0]
    assert flat.label is DistanceClass.M3_0
    assert flat.site == "x"
    again = to_flat(ts, n_sensor_features=1)
    assert np.array_equal(flat.vector, again.vector)


def test_histogram_spec_validation_and_buckets():
    assert HistogramSpec().n_buckets == 14
    with pytest.raises(ValueError):
        HistogramSpec(lo=-30, hi=-100)
    with pytest.raises(ValueError):
        HistogramSpec(bucket_width=0)


def test_histogram_hand_buckets():
    iv = make_interval(
        [ble_reading(0.0, -61.0), ble_reading(1.0, -63.0), ble_reading(2.0, -78.0)]
    )
    h = to_histogram(iv, HistogramSpec(lo=-100.0, hi=-30.0, bucket_width=5.0))
    assert h.freqs[7] == pytest.approx(2 / 3)
    assert h.freqs[4] == pytest.approx(1 / 3)
    assert h.freqs.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.count_nonzero(h.freqs) == 2


def test_histogram_singleton_and_clamping():
    iv = make_interval([ble_reading(0.0, -55.0)])
    h = to_histogram(iv)
    assert h.freqs.max() == 1.0
    below = make_interval([ble_reading(0.0, -200.0)])
    assert to_histogram(below).freqs[0] == 1.0
    above = make_interval([ble_reading(0.0, 0.0)])
    assert to_histogram(above).freqs[-1] == 1.0


def test_histogram_no_ble_readings_is_all_zero():
    iv = make_interval(
        [SensorReading(t=0.0, kind=SensorKind.ALTITUDE, values=(1013.0,))]
    )
    h = to_histogram(iv)
    assert np.all(h.freqs == 0.0)


def _flat(vec, label):
    return FlatSample(vector=np.asarray(vec, dtype=float), label=label, site="s")


def test_mixup_endpoints_and_midpoint():
    a = _flat([0.0, 2.0], DistanceClass.M1_2)
    b = _flat([2.0, 0.0], DistanceClass.M3_0)
    v, lab = mixup(a, b, 1.0)
    assert v.tolist() == [0.0, 2.0] and lab.tolist() == [1, 0, 0, 0]
    v, lab = mixup(a, b, 0.0)
    assert v.tolist() == [2.0, 0.0] and lab.tolist() == [0, 0, 1, 0]
    v, lab = mixup(a, b, 0.5)
    assert v.tolist() == [1.0, 1.0]
    assert lab.tolist() == [0.5, 0.0, 0.5, 0.0]


def test_mixup_validation():
    a = _flat([0.0, 2.0], DistanceClass.M1_2)
    short = _flat([1.0], DistanceClass.M1_8)
    with pytest.raises(ValueError):
        mixup(a, short, 0.5)
    with pytest.raises(ValueError):
        mixup(a, a, 1.5)


def test_mixup_convexity_bounds(rng):
    for _ in range(200):
        a = _flat(rng.standard_normal(6), DistanceClass.M1_2)
        b = _flat(rng.standard_normal(6), DistanceClass.M4_5)
        lam = draw_mixup_lambda(rng)
        v, lab = mixup(a, b, lam)
        lo = np.minimum(a.vector, b.vector)
        hi = np.maximum(a.vector, b.vector)
        assert np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12)
        assert lab.sum() == pytest.approx(1.0)


def test_build_datasets_pipeline_and_normalized_stats(rng):
    train = [full_sensor_interval(rng, label=CLASSES[i % 4], experiment_id=f"e{i}") for i in range(8)]
    evals = [full_sensor_interval(rng, label=CLASSES[i % 4], site="site_b") for i in range(4)]
    vocab = MetadataVocab.from_metas([iv.meta for iv in train + evals])
    train_ds, eval_ds, scaler, report = build_timeseries_datasets(train, evals, vocab)
    X = train_ds.features()
    assert X.shape == (8, 150, 18 + vocab.width)
    sensor_block = X[:, :, :18].reshape(-1, 18)
    nonconstant = sensor_block.std(axis=0) > 1e-6
    assert np.all(np.abs(sensor_block.mean(axis=0)[nonconstant]) <= 1e-9)
    assert np.all(np.abs(sensor_block.std(axis=0)[nonconstant] - 1.0) <= 1e-6)
    assert report.n_train == 8 and report.n_eval == 4
    assert eval_ds.normalizer is scaler


def test_build_datasets_sensor_subset_zeroes_excluded(rng):
    train = [full_sensor_interval(rng, label=CLASSES[i % 4]) for i in range(6)]
    train_ds, _, _, _ = build_timeseries_datasets(
        train, train, None, sensors=(SensorKind.BLUETOOTH,)
    )
    X = train_ds.features()
    assert X.shape[2] == 18  # no metadata vocab
    assert np.all(X[:, :, 1:18] == 0.0)
    assert np.any(X[:, :, 0] != 0.0)
    with pytest.raises(ValueError):
        build_timeseries_datasets(train, train, None, sensors=())


def test_flatten_dataset_width(rng):
    train = [full_sensor_interval(rng, label=CLASSES[i % 4], tx_model=f"m{i%2}") for i in range(6)]
    vocab = MetadataVocab.from_metas([iv.meta for iv in train])
    train_ds, _, _, _ = build_timeseries_datasets(train, train, vocab)
    flat = flatten_dataset(train_ds)
    assert flat.features().shape == (6, 150 * 18 + vocab.width)
    assert flat.kind == "flat"
