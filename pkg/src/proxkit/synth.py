"""Two-site synthetic data generator with a controllable cross-site shift.

BLE signal strength follows a log-distance path-loss model with Gaussian
shadowing; motion-ish channels are bounded random walks whose step size
depends on the carriage state, so they carry context but little distance
signal. Output is exactly the log + manifest format the ingest module reads.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import CLASSES, SENSOR_ORDER, Interval, SensorKind, SensorReading
from .ingest import ManifestRecord, Manifest, manifest_rows, serialize_interval
from .ioutil import atomic_write_text, parse_keyvalue_file

DEFAULT_RATES_HZ: dict[str, float] = {
    "bluetooth": 37.5,
    "accelerometer": 5.0,
    "gyroscope": 5.0,
    "magnetometer": 5.0,
    "attitude": 5.0,
    "gravity": 5.0,
    "altitude": 2.0,
    "compass": 2.0,
}

DEFAULT_CARRIAGE_ATTEN_DB: dict[str, float] = {"hand": 0.0, "pocket": 4.0, "purse": 7.0}
DEFAULT_CARRIAGE_WALK_SCALE: dict[str, float] = {"hand": 1.6, "pocket": 0.6, "purse": 1.0}
DEFAULT_TX_POWER_OFFSET_DB: dict[str, float] = {"low": -3.0, "high": 3.0}

# Per-sensor random-walk shape: (resting level per axis, step std, lower, upper)
_WALK: dict[SensorKind, tuple] = {
    SensorKind.ACCELEROMETER: ((0.0, 0.0, 0.0), 0.20, -6.0, 6.0),
    SensorKind.GYROSCOPE: ((0.0, 0.0, 0.0), 0.15, -4.0, 4.0),
    SensorKind.MAGNETOMETER: ((30.0, 10.0, -20.0), 0.80, -100.0, 100.0),
    SensorKind.ATTITUDE: ((0.0, 0.0, 0.0), 0.06, -3.14159, 3.14159),
    SensorKind.GRAVITY: ((0.0, 0.0, 9.81), 0.03, -10.5, 10.5),
    SensorKind.ALTITUDE: ((1013.0,), 0.03, 900.0, 1100.0),
}


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance model: rssi = p0 - 10 n log10(d) - attenuation + noise."""

    p0: float = -45.0
    n_exp: float = 2.0
    sigma: float = 6.0
    sigma_interval: float = 2.0  # slow shadowing, drawn once per interval

    def __post_init__(self) -> None:
        if self.n_exp <= 0:
            raise ValueError(f"path-loss exponent must be positive, got {self.n_exp}")
        if self.sigma < 0 or self.sigma_interval < 0:
            raise ValueError("shadowing std must be non-negative")


def rssi_sample(
    d: float,
    params: PathLossParams,
    carriage_atten: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """One received-strength draw in dBm for a transmitter at ``d`` meters."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    noise = 0.0 if rng is None else rng.normal(0.0, params.sigma)
    return params.p0 - 10.0 * params.n_exp * math.log10(d) - carriage_atten + noise


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_experiments: int = 10  # per site
    intervals_per_experiment: int = 8
    window_s: float = 4.0
    sites: tuple[str, ...] = ("site_a", "site_b")
    rates_hz: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_RATES_HZ))
    base: PathLossParams = PathLossParams()
    shift: float = 0.0  # scales how far the second site's physics diverges
    # optional extra divergence: scales the shifted site's carriage attenuation
    # by (1 + carriage_shift * shift), emulating site-specific carrying habits.
    # Off by default; the base shift knob only moves p0, the exponent and sigma.
    carriage_shift: float = 0.0
    carriage_atten_db: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CARRIAGE_ATTEN_DB)
    )
    carriage_walk_scale: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CARRIAGE_WALK_SCALE)
    )
    tx_power_offset_db: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_TX_POWER_OFFSET_DB)
    )
    tx_models: tuple[str, ...] = ("phone_a", "phone_b", "phone_c")
    rx_models: tuple[str, ...] = ("phone_a", "phone_b", "phone_c")

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.n_experiments <= 0 or self.intervals_per_experiment <= 0:
            raise ValueError("experiment and interval counts must be positive")
        if self.shift < 0:
            raise ValueError(f"shift must be >= 0, got {self.shift}")
        if self.carriage_shift < 0:
            raise ValueError(f"carriage_shift must be >= 0, got {self.carriage_shift}")
        if self.window_s <= 0:
            raise ValueError("window must be positive")
        for name, rate in self.rates_hz.items():
            if rate <= 0:
                raise ValueError(f"rate for {name} must be positive, got {rate}")


# How one unit of shift moves the second site away from the first. The signs
# are calibrated so shifted data shows the cross-site phenomena: a positive
# reference-power divergence makes the second site read systematically
# "closer", which degrades cross-site generalization without collapsing the
# class structure outright.
SHIFT_P0_DB = +5.0
SHIFT_N_EXP = +0.4


def site_params(config: SynthConfig, site_index: int) -> PathLossParams:
    """Site 0 uses the base physics; later sites diverge proportionally to shift."""
    if site_index == 0 or config.shift == 0.0:
        return config.base
    s = config.shift
    return replace(
        config.base,
        p0=config.base.p0 + SHIFT_P0_DB * s,
        n_exp=config.base.n_exp + SHIFT_N_EXP * s,
        sigma=config.base.sigma * (1.0 + s),
        sigma_interval=config.base.sigma_interval * (1.0 + s),
    )


def _reading_times(window: float, rate: float) -> np.ndarray:
    # closed interval: a reading landing exactly on the window boundary is real data
    n = int(math.floor(window * rate + 1e-9)) + 1
    return np.arange(n) / rate


WALK_PULL = 0.85  # per-reading mean reversion keeps the walks bounded in practice


def _walk_channel(
    rng: np.random.Generator, kind: SensorKind, n: int, scale_mult: float
) -> np.ndarray:
    """Mean-reverting bounded walk around the sensor's resting level."""
    level, step, lo, hi = _WALK[kind]
    scale = step * scale_mult
    level = np.asarray(level, dtype=np.float64)
    path = np.empty((n, kind.dim))
    x = level + rng.normal(0.0, scale, size=kind.dim)
    for i in range(n):
        path[i] = x
        x = level + WALK_PULL * (x - level) + rng.normal(0.0, scale, size=kind.dim)
    return np.clip(path, lo, hi)


def _synth_interval(
    rng: np.random.Generator,
    config: SynthConfig,
    params: PathLossParams,
    label_meters: float,
    tx_power: str,
    carriage: str,
    carriage_scale: float = 1.0,
) -> list[SensorReading]:
    readings: list[SensorReading] = []
    eff = replace(params, p0=params.p0 + config.tx_power_offset_db[tx_power])
    atten = config.carriage_atten_db[carriage] * carriage_scale
    slow = rng.normal(0.0, params.sigma_interval)
    for t in _reading_times(config.window_s, config.rates_hz["bluetooth"]):
        v = rssi_sample(label_meters, eff, atten, rng) + slow
        readings.append(SensorReading(t=float(t), kind=SensorKind.BLUETOOTH, values=(v,)))
    walk_mult = config.carriage_walk_scale[carriage]
    for kind in SENSOR_ORDER:
        if kind is SensorKind.BLUETOOTH:
            continue
        times = _reading_times(config.window_s, config.rates_hz[kind.value])
        if kind is SensorKind.COMPASS:
            # wanders around a per-interval heading; clipping instead of a
            # 0/360 wrap keeps the channel free of artificial jumps
            start = rng.uniform(20.0, 340.0)
            values = np.empty((len(times), 1))
            x = start
            for i in range(len(times)):
                values[i, 0] = x
                x = start + WALK_PULL * (x - start) + rng.normal(0.0, 4.0 * walk_mult)
            values = np.clip(values, 0.0, 360.0)
        else:
            values = _walk_channel(rng, kind, len(times), walk_mult)
        for t, row in zip(times, values):
            readings.append(SensorReading(t=float(t), kind=kind, values=tuple(float(v) for v in row)))
    readings.sort(key=lambda r: r.t)  # stable: ties keep sensor order
    return readings


@dataclass(frozen=True)
class SiteSummary:
    site: str
    n_intervals: int
    n_lines: int
    log_path: str
    manifest_path: str


@dataclass(frozen=True)
class GenSummary:
    out_dir: str
    sites: tuple[SiteSummary, ...]

    @property
    def n_intervals(self) -> int:
        return sum(s.n_intervals for s in self.sites)


def generate(config: SynthConfig, out_dir: str | Path) -> GenSummary:
    """Write per-site log + manifest files; byte-identical for a fixed config.

    Every experiment derives its own RNG stream from (seed, site, experiment),
    so generation order or parallelism cannot change the output. Distance
    labels rotate with the experiment index, keeping per-site class counts
    balanced to within one experiment's interval count.
    """
    out = Path(out_dir)
    summaries = []
    for si, site in enumerate(config.sites):
        params = site_params(config, si)
        carriage_scale = 1.0
        if si > 0 and config.shift > 0:
            carriage_scale = 1.0 + config.carriage_shift * config.shift
        lines: list[str] = []
        records: list[ManifestRecord] = []
        powers = sorted(config.tx_power_offset_db)
        carriages = sorted(config.carriage_atten_db)
        for e in range(config.n_experiments):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, si, e]))
            experiment_id = f"{site}-exp{e:04d}"
            tx_model = config.tx_models[rng.integers(len(config.tx_models))]
            rx_model = config.rx_models[rng.integers(len(config.rx_models))]
            # carriage and power rotate across experiments, like a structured
            # collection protocol covering its conditions evenly
            tx_power = powers[e % len(powers)]
            carriage = carriages[e % len(carriages)]
            for j in range(config.intervals_per_experiment):
                label = CLASSES[(e + j) % len(CLASSES)]
                readings = _synth_interval(
                    rng, config, params, label.meters, tx_power, carriage, carriage_scale
                )
                interval = Interval(
                    meta=_meta(experiment_id, site, tx_model, rx_model, tx_power, carriage),
                    label=label,
                    readings=tuple(readings),
                    window=config.window_s,
                )
                iv_lines, record = serialize_interval(f"{experiment_id}-iv{j:03d}", interval)
                lines.extend(iv_lines)
                records.append(record)
        site_dir = out / site
        log_path = site_dir / "logs.txt"
        manifest_path = site_dir / "manifest.csv"
        atomic_write_text(log_path, "\n".join(lines) + "\n")
        atomic_write_text(manifest_path, _manifest_csv(Manifest(records=tuple(records))))
        summaries.append(
            SiteSummary(
                site=site,
                n_intervals=len(records),
                n_lines=len(lines),
                log_path=str(log_path),
                manifest_path=str(manifest_path),
            )
        )
    return GenSummary(out_dir=str(out), sites=tuple(summaries))


def _meta(experiment_id, site, tx_model, rx_model, tx_power, carriage):
    from .core import ExperimentMeta

    return ExperimentMeta(
        experiment_id=experiment_id,
        site=site,
        tx_model=tx_model,
        rx_model=rx_model,
        tx_power=tx_power,
        carriage=carriage,
    )


def _manifest_csv(manifest: Manifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(manifest_rows(manifest))
    return buf.getvalue()


# Keys the plain-text config file may set; three rate knobs cover the table.
def config_from_file(path: str | Path, overrides: Mapping[str, str] | None = None) -> SynthConfig:
    raw = parse_keyvalue_file(path)
    if overrides:
        raw.update(overrides)
    return config_from_mapping(raw)


def config_from_mapping(raw: Mapping[str, str]) -> SynthConfig:
    base = PathLossParams(
        p0=float(raw.get("p0", PathLossParams.p0)),
        n_exp=float(raw.get("path_loss_exponent", PathLossParams.n_exp)),
        sigma=float(raw.get("sigma", PathLossParams.sigma)),
        sigma_interval=float(raw.get("sigma_interval", PathLossParams.sigma_interval)),
    )
    rates = dict(DEFAULT_RATES_HZ)
    if "rate_bluetooth" in raw:
        rates["bluetooth"] = float(raw["rate_bluetooth"])
    if "rate_imu" in raw:
        for name in ("accelerometer", "gyroscope", "magnetometer", "attitude", "gravity"):
            rates[name] = float(raw["rate_imu"])
    if "rate_slow" in raw:
        for name in ("altitude", "compass"):
            rates[name] = float(raw["rate_slow"])
    sites = tuple(s.strip() for s in raw.get("sites", "site_a,site_b").split(",") if s.strip())
    return SynthConfig(
        seed=int(raw.get("seed", 0)),
        n_experiments=int(raw.get("n_experiments", SynthConfig.n_experiments)),
        intervals_per_experiment=int(
            raw.get("intervals_per_experiment", SynthConfig.intervals_per_experiment)
        ),
        window_s=float(raw.get("window_s", SynthConfig.window_s)),
        sites=sites,
        rates_hz=rates,
        base=base,
        shift=float(raw.get("shift", 0.0)),
        carriage_shift=float(raw.get("carriage_shift", 0.0)),
    )
