import numpy as np
import pytest

from proxkit.core import CLASSES, Dataset, FlatSample, ModelKind, SensorKind, TrainPreset
from proxkit.evaluation import (
    AblationSpec,
    ContactRule,
    RfComparison,
    ablate,
    bench_grid,
    compare_rf_modes,
    render_report_csv,
    run_experiment,
    write_report,
)
from proxkit.features import MetadataVocab, build_timeseries_datasets, flatten_dataset
from proxkit.ingest import SiteSplit, assemble
from proxkit.validation import ConfigurationError

from conftest import full_sensor_interval


@pytest.fixture(scope="module")
def interval_splits():
    rng = np.random.default_rng(77)
    ivs = []
    for site in ("site_a", "site_b"):
        for e in range(4):
            for j in range(8):
                ivs.append(
                    full_sensor_interval(
                        rng,
                        label=CLASSES[(e + j) % 4],
                        experiment_id=f"{site}-e{e}",
                        site=site,
                        n_per_kind=6,
                    )
                )
    return assemble(ivs, SiteSplit(("site_a",), ("site_b",)))


@pytest.fixture(scope="module")
def flat_splits(interval_splits):
    train_iv, eval_iv = interval_splits
    train_ts, eval_ts, _, _ = build_timeseries_datasets(
        train_iv.samples, eval_iv.samples, train_iv.vocab
    )
    return flatten_dataset(train_ts), flatten_dataset(eval_ts)


class PerfectStub:
    """Predicts the truth it was told at construction; fit is a no-op."""

    def __init__(self, truths):
        self.truths = list(truths)

    def fit(self, X, y):
        return self

    def predict_classes(self, X):
        return self.truths


def test_perfect_stub_scores_zero(flat_splits):
    train, eval_ = flat_splits
    row = run_experiment(PerfectStub(eval_.labels()), train, eval_)
    assert row.ndcf == 0.0
    assert row.accuracy == 1.0
    assert row.model == "PerfectStub"


def test_report_row_shape_and_csv(flat_splits):
    train, eval_ = flat_splits
    row = run_experiment("naive_bayes", train, eval_, seed=0)
    assert row.train_set == "site_a"
    assert row.eval_set == "site_b"
    csv_text = render_report_csv([row])
    header = csv_text.splitlines()[0]
    assert header == "model,train_set,eval_set,ndcf,accuracy,p_fn,p_fp"
    assert csv_text.splitlines()[1].startswith("naive_bayes,site_a,site_b,")


def test_run_experiment_determinism(flat_splits):
    train, eval_ = flat_splits
    a = run_experiment("rf_classifier", train, eval_, seed=5,
                       forest_params={"n_trees": 5, "max_depth": 4, "min_leaf": 2})
    b = run_experiment("rf_classifier", train, eval_, seed=5,
                       forest_params={"n_trees": 5, "max_depth": 4, "min_leaf": 2})
    assert a == b


def test_run_experiment_rejects_mismatched_representation(interval_splits, flat_splits):
    train_iv, eval_iv = interval_splits
    train_flat, eval_flat = flat_splits
    with pytest.raises(ConfigurationError):
        run_experiment("conv1d", train_flat, eval_flat)
    train_ts, eval_ts, _, _ = build_timeseries_datasets(
        train_iv.samples, eval_iv.samples, train_iv.vocab
    )
    with pytest.raises(ConfigurationError):
        run_experiment("feedforward", train_ts, eval_ts)
    with pytest.raises(ConfigurationError):
        run_experiment("no_such_model", train_flat, eval_flat)


def test_run_experiment_rejects_wrong_preset_kind(flat_splits):
    train, eval_ = flat_splits
    gru_preset = TrainPreset(ModelKind.GRU, 1, 1, 4, 1e-3, 8)
    with pytest.raises(ConfigurationError):
        run_experiment("feedforward", train, eval_, preset=gru_preset)


def test_ablation_full_set_matches_plain_pipeline(interval_splits):
    train_iv, eval_iv = interval_splits
    rule = ContactRule()
    seed = 3
    fp = {"n_trees": 5, "max_depth": 4, "min_leaf": 2}
    specs = [AblationSpec(sensors=tuple(SensorKind))]
    rows = ablate(specs, train_iv, eval_iv, model="rf_classifier", rule=rule, seed=seed,
                  forest_params=fp)
    train_ts, eval_ts, _, _ = build_timeseries_datasets(
        train_iv.samples, eval_iv.samples, train_iv.vocab
    )
    plain = run_experiment(
        "rf_classifier",
        flatten_dataset(train_ts),
        flatten_dataset(eval_ts),
        rule,
        seed=seed,
        forest_params=fp,
    )
    assert rows[0].ndcf == plain.ndcf
    assert rows[0].eval_accuracy == plain.accuracy
    assert rows[0].accuracy_gap == rows[0].train_accuracy - rows[0].eval_accuracy


def test_ablation_metadata_toggle_changes_only_width(interval_splits):
    train_iv, eval_iv = interval_splits
    with_meta, _, _, _ = build_timeseries_datasets(
        train_iv.samples, eval_iv.samples, train_iv.vocab, include_metadata=True
    )
    without, _, _, _ = build_timeseries_datasets(
        train_iv.samples, eval_iv.samples, train_iv.vocab, include_metadata=False
    )
    width_with = with_meta.features().shape[2]
    width_without = without.features().shape[2]
    assert width_with - width_without == train_iv.vocab.width
    assert np.array_equal(with_meta.features()[:, :, :18], without.features())


def test_ablation_rejects_empty_subset():
    with pytest.raises(ConfigurationError):
        AblationSpec(sensors=())


def test_ablation_reports_accuracy_gap_per_subset(interval_splits):
    train_iv, eval_iv = interval_splits
    specs = [
        AblationSpec(sensors=(SensorKind.BLUETOOTH,)),
        AblationSpec.from_names(["bluetooth", "accelerometer"], include_metadata=False),
    ]
    rows = ablate(specs, train_iv, eval_iv, model="naive_bayes", seed=0)
    assert len(rows) == 2
    assert rows[0].sensors == "bluetooth"
    assert rows[1].include_metadata is False
    for row in rows:
        assert row.accuracy_gap == pytest.approx(row.train_accuracy - row.eval_accuracy)


def test_compare_rf_modes_runs_both_on_identical_data(flat_splits):
    train, eval_ = flat_splits
    cmp = compare_rf_modes(
        train,
        eval_,
        seed=1,
        subset_fraction=0.5,
        forest_params={"n_trees": 4, "max_depth": 4, "min_leaf": 2},
    )
    assert isinstance(cmp, RfComparison)
    assert cmp.classifier.model == "rf_classifier"
    assert cmp.regressor.model == "rf_regressor"
    assert cmp.delta == pytest.approx(cmp.classifier.ndcf - cmp.regressor.ndcf)
    with pytest.raises(ConfigurationError):
        compare_rf_modes(train, eval_, subset_fraction=1.5)


def test_bench_grid_one_row_per_model(interval_splits):
    train_iv, eval_iv = interval_splits
    models = ["naive_bayes", "rf_classifier", "rf_histogram_regressor"]
    rows = bench_grid(
        models,
        train_iv,
        eval_iv,
        seed=2,
        forest_params={"n_trees": 4, "max_depth": 4, "min_leaf": 2},
    )
    assert [r.model for r in rows] == models
    assert all(r.train_set == "site_a" for r in rows)


def test_write_report_atomic(tmp_path, flat_splits):
    train, eval_ = flat_splits
    row = run_experiment("naive_bayes", train, eval_, seed=0)
    path = tmp_path / "report.csv"
    write_report(path, [row])
    first = path.read_bytes()
    write_report(path, [row])
    assert path.read_bytes() == first
