"""Batch command-line entry point.

Subcommands: gen, prep, train, eval, ablate, analyze, bench. Every value can
come from a ``key = value`` config file (``--config`` or the PROXKIT_CONFIG
environment variable); command-line flags override the file, which overrides
defaults. Seeds are always explicit; nothing falls back to wall-clock time.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import evaluation, synth
from .analysis import PrincipalComponents, emit_scatter, nn_gap, optimal_subset
from .container import load_dataset, load_model, save_dataset, save_model
from .core import SENSOR_ORDER, SensorKind
from .evaluation import (
    AblationSpec,
    ContactRule,
    ReportRow,
    bench_grid,
    build_model,
    run_experiment,
    write_ablation_report,
    write_history,
    write_report,
)
from .features import (
    HistogramSpec,
    build_timeseries_datasets,
    flatten_dataset,
    histogram_dataset,
)
from .ingest import FractionSplit, IngestError, SiteSplit, assemble, load_site_intervals
from .ioutil import atomic_write_text, parse_keyvalue_file
from .metrics import accuracy, ndcf
from .nn.models import NeuralNetModel
from .presets import PRESETS, get_preset
from .validation import ConfigurationError

CONFIG_ENV_VAR = "PROXKIT_CONFIG"

REPRESENTATIONS = ("timeseries", "flat", "histogram")


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {value!r}")


class Config:
    """Merged defaults < config file < command-line flags."""

    def __init__(self, values: dict):
        self.values = values

    def get(self, key: str, default=None, converter=None, required: bool = False):
        if key in self.values and self.values[key] is not None:
            value = self.values[key]
            return converter(value) if converter else value
        if required:
            raise ConfigurationError(f"missing required configuration key: {key}")
        return default

    def get_int(self, key, default=None, required=False):
        return self.get(key, default, lambda v: int(str(v)), required)

    def get_float(self, key, default=None, required=False):
        return self.get(key, default, lambda v: float(str(v)), required)

    def get_bool(self, key, default=False):
        return self.get(key, default, _as_bool)

    def get_str(self, key, default=None, required=False):
        return self.get(key, default, str, required)


def _merge_config(args: argparse.Namespace) -> Config:
    values: dict = {}
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        values.update(parse_keyvalue_file(config_path))
    for key, value in vars(args).items():
        if key in ("func", "command", "config"):
            continue
        if value is not None:
            values[key] = value
    return Config(values)


def _contact_rule(cfg: Config) -> ContactRule:
    return ContactRule(
        threshold=cfg.get_float("contact_threshold", 1.8),
        w_fn=cfg.get_float("w_fn", 1.0),
        w_fp=cfg.get_float("w_fp", 1.0),
    )


def _split_rule(cfg: Config):
    train_site = cfg.get_str("train_site")
    eval_site = cfg.get_str("eval_site")
    fraction = cfg.get_float("split_fraction")
    if train_site and eval_site:
        return SiteSplit(
            train_sites=tuple(s.strip() for s in train_site.split(",") if s.strip()),
            eval_sites=tuple(s.strip() for s in eval_site.split(",") if s.strip()),
        )
    if fraction is not None:
        return FractionSplit(train_fraction=fraction)
    raise ConfigurationError(
        "missing required configuration keys: either train_site + eval_site or split_fraction"
    )


def _sensor_subset(cfg: Config) -> tuple[SensorKind, ...] | None:
    raw = cfg.get("sensors")
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = [raw]
    names: list[str] = []
    for chunk in raw:
        names.extend(n.strip() for n in str(chunk).split(",") if n.strip())
    return tuple(SensorKind.from_name(n) for n in names)


def _histogram_spec(cfg: Config) -> HistogramSpec:
    return HistogramSpec(
        lo=cfg.get_float("hist_lo", -100.0),
        hi=cfg.get_float("hist_hi", -30.0),
        bucket_width=cfg.get_float("hist_width", 5.0),
    )


def _forest_params(cfg: Config) -> dict:
    return {
        "n_trees": cfg.get_int("rf_trees", 100),
        "max_depth": cfg.get_int("rf_depth", 12),
        "min_leaf": cfg.get_int("rf_min_leaf", 2),
    }


def _load_splits(cfg: Config, out_note: str = "prep output"):
    data_dir = Path(cfg.get_str("data_dir", required=True))
    train_path = data_dir / "train.pxd"
    eval_path = data_dir / "eval.pxd"
    if not train_path.exists() or not eval_path.exists():
        raise ConfigurationError(
            f"{data_dir} does not contain train.pxd/eval.pxd ({out_note} expected)"
        )
    return load_dataset(train_path), load_dataset(eval_path)


def _write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_gen(cfg: Config) -> int:
    cfg.get_int("seed", required=True)
    out_dir = Path(cfg.get_str("out_dir", required=True))
    raw = {
        key: cfg.values[key]
        for key in (
            "seed",
            "n_experiments",
            "intervals_per_experiment",
            "window_s",
            "sites",
            "shift",
            "p0",
            "path_loss_exponent",
            "sigma",
            "sigma_interval",
            "rate_bluetooth",
            "rate_imu",
            "rate_slow",
        )
        if cfg.values.get(key) is not None
    }
    config = synth.config_from_mapping(raw)
    summary = synth.generate(config, out_dir)
    _write_json(
        out_dir / "gen_summary.json",
        {
            "n_intervals": summary.n_intervals,
            "sites": [
                {"site": s.site, "n_intervals": s.n_intervals, "n_lines": s.n_lines}
                for s in summary.sites
            ],
        },
    )
    print(f"generated {summary.n_intervals} intervals under {out_dir}")
    return 0


def cmd_prep(cfg: Config) -> int:
    seed = cfg.get_int("seed", required=True)
    out_dir = Path(cfg.get_str("out_dir", required=True))
    strict = cfg.get_bool("strict", False)
    representation = cfg.get_str("representation", "timeseries")
    if representation not in REPRESENTATIONS:
        raise ConfigurationError(
            f"representation must be one of {REPRESENTATIONS}, got {representation!r}"
        )
    intervals, report = load_site_intervals(cfg.get_str("data_dir", required=True), strict=strict)
    train_iv, eval_iv = assemble(intervals, _split_rule(cfg), seed=seed)
    if representation == "histogram":
        spec = _histogram_spec(cfg)
        train_ds = histogram_dataset(train_iv.samples, spec, "train")
        eval_ds = histogram_dataset(eval_iv.samples, spec, "eval")
        missing = {}
    else:
        train_ts, eval_ts, _, feat_report = build_timeseries_datasets(
            train_iv.samples,
            eval_iv.samples,
            train_iv.vocab,
            sensors=_sensor_subset(cfg),
            include_metadata=not cfg.get_bool("no_metadata", False),
        )
        missing = feat_report.missing_by_kind
        if representation == "flat":
            train_ds, eval_ds = flatten_dataset(train_ts), flatten_dataset(eval_ts)
        else:
            train_ds, eval_ds = train_ts, eval_ts
    save_dataset(out_dir / "train.pxd", train_ds)
    save_dataset(out_dir / "eval.pxd", eval_ds)
    _write_json(
        out_dir / "prep_report.json",
        {
            "representation": representation,
            "n_train": len(train_ds),
            "n_eval": len(eval_ds),
            "n_lines": report.n_lines,
            "n_parsed": report.n_parsed,
            "n_dropped_late": report.n_dropped_late,
            "n_errors": len(report.errors),
            "errors": report.errors,
            "missing_sensors": missing,
        },
    )
    print(
        f"prepared {len(train_ds)} train / {len(eval_ds)} eval samples "
        f"({representation}) under {out_dir}"
    )
    return 0


def cmd_train(cfg: Config) -> int:
    seed = cfg.get_int("seed", required=True)
    out_dir = Path(cfg.get_str("out_dir", required=True))
    model_name = cfg.get_str("model")
    preset_name = cfg.get_str("preset")
    if model_name is None and preset_name is None:
        raise ConfigurationError("missing required configuration key: model (or preset)")
    rule = _contact_rule(cfg)
    preset = get_preset(preset_name) if preset_name else None
    if model_name is None:
        model_name = preset.model_kind.value
    train_ds, eval_ds = _load_splits(cfg)
    need = evaluation.representation_for(model_name)
    if train_ds.kind != need:
        raise ConfigurationError(
            f"{model_name} consumes the {need} representation but {cfg.get_str('data_dir')} "
            f"holds {train_ds.kind}"
        )
    estimator = build_model(
        model_name,
        seed,
        rule,
        preset=preset,
        forest_params=_forest_params(cfg),
        mixup_alpha=cfg.get_float("mixup_alpha"),
    )
    y_train = evaluation.fit_targets(model_name, estimator, train_ds)
    if isinstance(estimator, NeuralNetModel):
        estimator.fit(
            train_ds.features(), y_train, eval_data=(eval_ds.features(), eval_ds.label_indices())
        )
        write_history(out_dir / "history.csv", estimator.history_)
    else:
        estimator.fit(train_ds.features(), y_train)
    save_model(out_dir / "model.pxm", estimator)
    _write_json(
        out_dir / "train_report.json",
        {"model": model_name, "seed": seed, "n_train": len(train_ds), "n_eval": len(eval_ds)},
    )
    print(f"trained {model_name} on {len(train_ds)} samples; model saved under {out_dir}")
    return 0


def _model_report_name(model) -> str:
    if isinstance(model, NeuralNetModel):
        return model.preset.model_kind.value
    from .baselines import GaussianNaiveBayes, RandomForestModel

    if isinstance(model, GaussianNaiveBayes):
        return "naive_bayes"
    if isinstance(model, RandomForestModel):
        return "rf_classifier" if model.mode == "classify" else "rf_regressor"
    return type(model).__name__


def cmd_eval(cfg: Config) -> int:
    out_dir = Path(cfg.get_str("out_dir", required=True))
    model_file = cfg.get_str("model_file", required=True)
    rule = _contact_rule(cfg)
    train_ds, eval_ds = _load_splits(cfg)
    model = load_model(model_file)
    predictions = model.predict_classes(eval_ds.features())
    truths = eval_ds.labels()
    result = ndcf(predictions, truths, rule)
    row = ReportRow(
        model=_model_report_name(model),
        train_set=evaluation.dataset_tag(train_ds),
        eval_set=evaluation.dataset_tag(eval_ds),
        ndcf=result.ndcf,
        accuracy=accuracy(predictions, truths),
        p_fn=result.p_fn,
        p_fp=result.p_fp,
        counts=result.counts,
    )
    write_report(out_dir / "eval_report.csv", [row])
    print(f"ndcf {result.ndcf:.4f} accuracy {row.accuracy:.4f} -> {out_dir / 'eval_report.csv'}")
    return 0


DEFAULT_ABLATION_NAMES = (
    "bluetooth",
    "bluetooth,accelerometer,gyroscope,magnetometer",
    ",".join(k.value for k in SENSOR_ORDER),
)


def cmd_ablate(cfg: Config) -> int:
    seed = cfg.get_int("seed", required=True)
    out_dir = Path(cfg.get_str("out_dir", required=True))
    strict = cfg.get_bool("strict", False)
    rule = _contact_rule(cfg)
    intervals, _ = load_site_intervals(cfg.get_str("data_dir", required=True), strict=strict)
    train_iv, eval_iv = assemble(intervals, _split_rule(cfg), seed=seed)
    raw = cfg.get("sensors") or list(DEFAULT_ABLATION_NAMES)
    if isinstance(raw, str):
        raw = [raw]
    include_metadata = not cfg.get_bool("no_metadata", False)
    specs = [
        AblationSpec.from_names(
            [n.strip() for n in str(chunk).split(",") if n.strip()], include_metadata
        )
        for chunk in raw
    ]
    preset_name = cfg.get_str("preset")
    rows = evaluation.ablate(
        specs,
        train_iv,
        eval_iv,
        model=cfg.get_str("model", "conv1d"),
        preset=get_preset(preset_name) if preset_name else None,
        rule=rule,
        seed=seed,
        forest_params=_forest_params(cfg),
    )
    write_ablation_report(out_dir / "ablation_report.csv", rows)
    for row in rows:
        print(
            f"{row.sensors}: ndcf {row.ndcf:.4f} "
            f"train acc {row.train_accuracy:.4f} eval acc {row.eval_accuracy:.4f}"
        )
    return 0


def cmd_analyze(cfg: Config) -> int:
    out_dir = Path(cfg.get_str("out_dir", required=True))
    train_ds, eval_ds = _load_splits(cfg)
    if train_ds.kind != "flat":
        raise ConfigurationError(
            f"analyze expects flat datasets (prep --representation flat), got {train_ds.kind!r}"
        )
    for ds, tag in ((train_ds, "train"), (eval_ds, "eval")):
        pca = PrincipalComponents(n_components=2).fit(ds.features())
        points = pca.transform(ds.features())
        emit_scatter(
            points,
            ds.labels(),
            out_dir / f"pca_{tag}.svg",
            table_path=out_dir / f"pca_{tag}.csv",
            title=f"{evaluation.dataset_tag(ds)} ({tag})",
        )
    gap = nn_gap(train_ds, eval_ds)
    subset = optimal_subset(train_ds, eval_ds, m=cfg.get_int("subset_m", 2))
    save_dataset(out_dir / "optimal_subset.pxd", subset)
    _write_json(
        out_dir / "nn_gap_report.json",
        {
            "mean_l2": gap.mean_l2,
            "mismatched_mean_l2": gap.mismatched_mean_l2,
            "mismatch_fraction": gap.mismatch_fraction,
            "n_pairs": gap.n_pairs,
            "optimal_subset_size": len(subset),
        },
    )
    atomic_write_text(out_dir / "nn_gap_report.txt", "\n".join(gap.lines()) + "\n")
    for line in gap.lines():
        print(line)
    print(f"optimal subset: {len(subset)} samples -> {out_dir / 'optimal_subset.pxd'}")
    return 0


DEFAULT_BENCH_MODELS = (
    "conv1d,conv1d_dilated,conv1d_maxpool,feedforward,gru,convgru,convgru_nolinear,"
    "naive_bayes,rf_classifier,rf_regressor,rf_histogram_regressor"
)


def cmd_bench(cfg: Config) -> int:
    seed = cfg.get_int("seed", required=True)
    out_dir = Path(cfg.get_str("out_dir", required=True))
    strict = cfg.get_bool("strict", False)
    rule = _contact_rule(cfg)
    intervals, _ = load_site_intervals(cfg.get_str("data_dir", required=True), strict=strict)
    train_iv, eval_iv = assemble(intervals, _split_rule(cfg), seed=seed)
    models = [
        m.strip()
        for m in cfg.get_str("models", DEFAULT_BENCH_MODELS).split(",")
        if m.strip()
    ]
    preset_name = cfg.get_str("preset")
    presets = {m: get_preset(preset_name) for m in models} if preset_name else None
    rows = bench_grid(
        models,
        train_iv,
        eval_iv,
        rule,
        seed=seed,
        presets=presets,
        forest_params=_forest_params(cfg),
        histogram_spec=_histogram_spec(cfg),
    )
    write_report(out_dir / "bench_report.csv", rows)
    summary: dict = {"models": models, "seed": seed}
    by_model = {r.model: r for r in rows}
    if "rf_classifier" in by_model and "rf_regressor" in by_model:
        summary["rf_regressor_vs_classifier_delta"] = (
            by_model["rf_classifier"].ndcf - by_model["rf_regressor"].ndcf
        )
    _write_json(out_dir / "bench_summary.json", summary)
    for row in rows:
        print(f"{row.model:<24} train {row.train_set:<16} ndcf {row.ndcf:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxkit",
        description="Proximity-sensing pipeline: synthesize, featurize, train, score, diagnose.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, data_dir_help: str) -> None:
        p.add_argument("--config", help="key = value config file (env PROXKIT_CONFIG sets the default)")
        p.add_argument("--seed", type=int, help="explicit RNG seed; required, never defaulted from the clock")
        p.add_argument("--data-dir", dest="data_dir", help=data_dir_help)
        p.add_argument("--out-dir", dest="out_dir", help="directory for output files")

    def split_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--train-site", dest="train_site", help="comma-separated sites for the train split")
        p.add_argument("--eval-site", dest="eval_site", help="comma-separated sites for the eval split")
        p.add_argument(
            "--split-fraction",
            dest="split_fraction",
            type=float,
            help="experiment-atomic train fraction, alternative to site splitting",
        )

    def rule_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--contact-threshold",
            dest="contact_threshold",
            type=float,
            help="contact distance threshold in meters, inclusive (default 1.8)",
        )
        p.add_argument("--w-fn", dest="w_fn", type=float, help="false-negative cost weight (default 1)")
        p.add_argument("--w-fp", dest="w_fp", type=float, help="false-positive cost weight (default 1)")

    p = sub.add_parser("gen", help="generate a synthetic two-site dataset")
    common(p, "unused for gen")
    p.add_argument("--n-experiments", dest="n_experiments", type=int, help="experiments per site")
    p.add_argument(
        "--intervals-per-experiment",
        dest="intervals_per_experiment",
        type=int,
        help="intervals per experiment",
    )
    p.add_argument("--shift", type=float, help="cross-site divergence knob, 0 = identical sites")
    p.add_argument("--sigma", type=float, help="fast shadowing std in dB")
    p.add_argument("--sigma-interval", dest="sigma_interval", type=float, help="slow per-interval shadowing std in dB")
    p.add_argument("--sites", help="comma-separated site names (default site_a,site_b)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("prep", help="ingest raw logs and persist featurized splits")
    common(p, "directory of <site>/logs.txt + <site>/manifest.csv")
    split_flags(p)
    p.add_argument(
        "--representation",
        choices=REPRESENTATIONS,
        help="which input representation to build (default timeseries)",
    )
    p.add_argument(
        "--sensors",
        action="append",
        help="comma-separated sensor subset to keep (others are zeroed)",
    )
    p.add_argument(
        "--no-metadata",
        dest="no_metadata",
        action="store_const",
        const=True,
        help="skip the metadata one-hot block",
    )
    p.add_argument(
        "--strict",
        action="store_const",
        const=True,
        help="fail on any parse error instead of collecting them",
    )
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train one model on prepared splits")
    common(p, "directory holding train.pxd/eval.pxd from prep")
    rule_flags(p)
    p.add_argument("--model", help="model name (e.g. conv1d, feedforward, naive_bayes, rf_regressor)")
    p.add_argument("--preset", help=f"hyperparameter preset name, one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--mixup-alpha", dest="mixup_alpha", type=float, help="enable mix-up with Beta(alpha, alpha)")
    p.add_argument("--rf-trees", dest="rf_trees", type=int, help="forest size (default 100)")
    p.add_argument("--rf-depth", dest="rf_depth", type=int, help="tree depth cap (default 12)")
    p.add_argument("--rf-min-leaf", dest="rf_min_leaf", type=int, help="minimum samples per leaf (default 2)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model on the eval split")
    common(p, "directory holding train.pxd/eval.pxd from prep")
    rule_flags(p)
    p.add_argument("--model-file", dest="model_file", help="path to a model.pxm checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare sensor subsets on the same pipeline")
    common(p, "directory of <site>/logs.txt + <site>/manifest.csv")
    split_flags(p)
    rule_flags(p)
    p.add_argument("--model", help="model name to retrain per subset (default conv1d)")
    p.add_argument("--preset", help="hyperparameter preset name")
    p.add_argument(
        "--sensors",
        action="append",
        help="comma-separated sensor subset; repeat the flag for several subsets",
    )
    p.add_argument(
        "--no-metadata",
        dest="no_metadata",
        action="store_const",
        const=True,
        help="drop the metadata one-hot block in every subset",
    )
    p.add_argument("--rf-trees", dest="rf_trees", type=int, help="forest size (default 100)")
    p.add_argument("--rf-depth", dest="rf_depth", type=int, help="tree depth cap (default 12)")
    p.add_argument("--rf-min-leaf", dest="rf_min_leaf", type=int, help="minimum samples per leaf (default 2)")
    p.add_argument(
        "--strict",
        action="store_const",
        const=True,
        help="fail on any parse error instead of collecting them",
    )
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("analyze", help="PCA scatter, nearest-neighbor gap, optimal subset")
    common(p, "directory holding FLAT train.pxd/eval.pxd from prep")
    p.add_argument("--subset-m", dest="subset_m", type=int, help="nearest points kept per eval sample (default 2)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="run the full results-table grid on one split")
    common(p, "directory of <site>/logs.txt + <site>/manifest.csv")
    split_flags(p)
    rule_flags(p)
    p.add_argument("--models", help="comma-separated model names (default: all)")
    p.add_argument("--preset", help="preset applied to every named model")
    p.add_argument("--rf-trees", dest="rf_trees", type=int, help="forest size (default 100)")
    p.add_argument("--rf-depth", dest="rf_depth", type=int, help="tree depth cap (default 12)")
    p.add_argument("--rf-min-leaf", dest="rf_min_leaf", type=int, help="minimum samples per leaf (default 2)")
    p.add_argument(
        "--strict",
        action="store_const",
        const=True,
        help="fail on any parse error instead of collecting them",
    )
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        return args.func(cfg)
    except ConfigurationError as exc:
        print(json.dumps({"command": args.command, "error": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, OSError, IngestError) as exc:
        print(json.dumps({"command": args.command, "error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
