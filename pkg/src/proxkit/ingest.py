"""Log and manifest parsing into Intervals, plus train/eval assembly.

Log files are line-oriented UTF-8 text, one reading per line:

    interval_id t sensor v1 [v2 v3]

with whitespace-separated fields, ``#`` starting a comment line, and blank
lines ignored. Manifests are CSV tables with a header row and the columns
``interval_id, experiment_id, site, tx_model, rx_model, tx_power, carriage,
distance_m, window_s``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DistanceClass,
    Dataset,
    ExperimentMeta,
    Interval,
    SensorKind,
    SensorReading,
)
from .features import MetadataVocab
from .validation import ConfigurationError

MANIFEST_COLUMNS = (
    "interval_id",
    "experiment_id",
    "site",
    "tx_model",
    "rx_model",
    "tx_power",
    "carriage",
    "distance_m",
    "window_s",
)

_METERS_TO_CLASS = {c.meters: c for c in DistanceClass}


class IngestError(ValueError):
    """Raised in strict mode when a parse collected any record errors."""


@dataclass(frozen=True)
class LogLine:
    interval_id: str
    t: float
    sensor: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ManifestRecord:
    interval_id: str
    experiment_id: str
    site: str
    tx_model: str
    rx_model: str
    tx_power: str
    carriage: str
    distance_m: float
    window_s: float

    def meta(self) -> ExperimentMeta:
        return ExperimentMeta(
            experiment_id=self.experiment_id,
            site=self.site,
            tx_model=self.tx_model,
            rx_model=self.rx_model,
            tx_power=self.tx_power,
            carriage=self.carriage,
        )

    def label(self) -> DistanceClass:
        return _METERS_TO_CLASS[self.distance_m]


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for r in self.records:
            if r.interval_id in seen:
                raise ValueError(f"duplicate interval_id {r.interval_id!r} in manifest")
            seen.add(r.interval_id)
            if r.distance_m not in _METERS_TO_CLASS:
                raise ValueError(
                    f"interval {r.interval_id!r}: distance {r.distance_m} is not one of "
                    f"{sorted(_METERS_TO_CLASS)}"
                )
            if r.window_s <= 0:
                raise ValueError(f"interval {r.interval_id!r}: window must be positive")

    def by_id(self) -> dict[str, ManifestRecord]:
        return {r.interval_id: r for r in self.records}


@dataclass
class ParseReport:
    """Bookkeeping: every candidate reading line ends up parsed, dropped or errored."""

    n_lines: int = 0
    n_parsed: int = 0
    n_dropped_late: int = 0
    errors: list[str] = field(default_factory=list)
    orphan_ids: tuple[str, ...] = ()
    empty_interval_ids: tuple[str, ...] = ()

    @property
    def n_errored(self) -> int:
        return self.n_lines - self.n_parsed - self.n_dropped_late


@dataclass
class ParseResult:
    intervals: list[Interval]
    report: ParseReport


def parse_log_line(line: str, line_no: int) -> LogLine:
    parts = line.split()
    if len(parts) < 4:
        raise ValueError(f"line {line_no}: expected 'interval_id t sensor values...', got {line!r}")
    interval_id, t_text, sensor = parts[0], parts[1], parts[2]
    try:
        t = float(t_text)
    except ValueError:
        raise ValueError(f"line {line_no}: bad time value {t_text!r}") from None
    try:
        values = tuple(float(v) for v in parts[3:])
    except ValueError:
        raise ValueError(f"line {line_no}: bad sensor values {parts[3:]!r}") from None
    return LogLine(interval_id=interval_id, t=t, sensor=sensor, values=values)


def format_log_line(interval_id: str, reading: SensorReading) -> str:
    values = " ".join(repr(float(v)) for v in reading.values)
    return f"{interval_id} {float(reading.t)!r} {reading.kind.value} {values}"


def serialize_interval(interval_id: str, interval: Interval) -> tuple[list[str], ManifestRecord]:
    """Emit an Interval back to log lines plus its manifest row."""
    lines = [format_log_line(interval_id, r) for r in interval.readings]
    m = interval.meta
    record = ManifestRecord(
        interval_id=interval_id,
        experiment_id=m.experiment_id,
        site=m.site,
        tx_model=m.tx_model,
        rx_model=m.rx_model,
        tx_power=m.tx_power,
        carriage=m.carriage,
        distance_m=interval.label.meters,
        window_s=interval.window,
    )
    return lines, record


def parse_logs(
    lines: Iterable[str], manifest: Manifest, strict: bool = False
) -> ParseResult:
    """Group log lines into one Interval per manifest record.

    Errors (unknown sensors, malformed lines, orphan interval ids) are
    collected and reported together; ``strict=True`` raises instead. Readings
    past the interval window are dropped with a count; readings at exactly
    the window boundary are kept. Manifest records with no readings are
    excluded and reported.
    """
    by_id = manifest.by_id()
    report = ParseReport()
    buckets: dict[str, list[SensorReading]] = {r.interval_id: [] for r in manifest.records}
    dropped: dict[str, int] = {}
    orphans: dict[str, None] = {}  # insertion-ordered set
    for line_no, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        report.n_lines += 1
        try:
            parsed = parse_log_line(text, line_no)
            kind = SensorKind.from_name(parsed.sensor)
            if parsed.interval_id not in by_id:
                orphans[parsed.interval_id] = None
                raise ValueError(
                    f"line {line_no}: interval_id {parsed.interval_id!r} not in manifest"
                )
            reading = SensorReading(t=parsed.t, kind=kind, values=parsed.values)
        except ValueError as exc:
            msg = str(exc)
            if not msg.startswith("line "):
                msg = f"line {line_no}: {msg}"
            report.errors.append(msg)
            continue
        record = by_id[parsed.interval_id]
        if reading.t > record.window_s:
            dropped[parsed.interval_id] = dropped.get(parsed.interval_id, 0) + 1
            report.n_dropped_late += 1
            continue
        buckets[parsed.interval_id].append(reading)
        report.n_parsed += 1
    if orphans:
        report.orphan_ids = tuple(orphans)
        report.errors.append(
            "orphan interval ids not present in manifest: " + ", ".join(orphans)
        )
    intervals: list[Interval] = []
    empty: list[str] = []
    for record in manifest.records:
        readings = sorted(buckets[record.interval_id], key=lambda r: r.t)
        if not readings:
            empty.append(record.interval_id)
            continue
        intervals.append(
            Interval(
                meta=record.meta(),
                label=record.label(),
                readings=tuple(readings),
                window=record.window_s,
            )
        )
    if empty:
        report.empty_interval_ids = tuple(empty)
        report.errors.append("intervals with zero readings excluded: " + ", ".join(empty))
    if strict and report.errors:
        raise IngestError("; ".join(report.errors))
    return ParseResult(intervals=intervals, report=report)


def read_manifest(path: str | Path) -> Manifest:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest {path} lacks columns: {sorted(missing)}")
        records = tuple(
            ManifestRecord(
                interval_id=row["interval_id"],
                experiment_id=row["experiment_id"],
                site=row["site"],
                tx_model=row["tx_model"],
                rx_model=row["rx_model"],
                tx_power=row["tx_power"],
                carriage=row["carriage"],
                distance_m=float(row["distance_m"]),
                window_s=float(row["window_s"]),
            )
            for row in reader
        )
    return Manifest(records=records)


def manifest_rows(manifest: Manifest) -> list[list[str]]:
    rows = [list(MANIFEST_COLUMNS)]
    for r in manifest.records:
        rows.append(
            [
                r.interval_id,
                r.experiment_id,
                r.site,
                r.tx_model,
                r.rx_model,
                r.tx_power,
                r.carriage,
                repr(r.distance_m),
                repr(r.window_s),
            ]
        )
    return rows


def load_site_intervals(data_dir: str | Path, strict: bool = False) -> tuple[list[Interval], ParseReport]:
    """Read every ``<site>/manifest.csv`` + ``<site>/logs.txt`` under a data dir.

    Sites are visited in sorted order so the merged interval list is
    deterministic regardless of filesystem ordering.
    """
    data_dir = Path(data_dir)
    site_dirs = sorted(p for p in data_dir.iterdir() if (p / "manifest.csv").exists())
    if not site_dirs:
        raise FileNotFoundError(f"no '<site>/manifest.csv' found under {data_dir}")
    intervals: list[Interval] = []
    merged = ParseReport()
    for site_dir in site_dirs:
        manifest = read_manifest(site_dir / "manifest.csv")
        with open(site_dir / "logs.txt", encoding="utf-8") as fh:
            result = parse_logs(fh, manifest, strict=strict)
        intervals.extend(result.intervals)
        merged.n_lines += result.report.n_lines
        merged.n_parsed += result.report.n_parsed
        merged.n_dropped_late += result.report.n_dropped_late
        merged.errors.extend(f"{site_dir.name}: {e}" for e in result.report.errors)
        merged.orphan_ids += result.report.orphan_ids
        merged.empty_interval_ids += result.report.empty_interval_ids
    return intervals, merged


@dataclass(frozen=True)
class SiteSplit:
    """Whole sites go to one side; sites named on neither side are excluded."""

    train_sites: tuple[str, ...]
    eval_sites: tuple[str, ...]

    def __post_init__(self) -> None:
        overlap = set(self.train_sites) & set(self.eval_sites)
        if overlap:
            raise ConfigurationError(f"sites on both sides of the split: {sorted(overlap)}")


@dataclass(frozen=True)
class FractionSplit:
    """Split by experiment so no experiment straddles train and eval."""

    train_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(
                f"train fraction must lie in (0, 1), got {self.train_fraction}"
            )


SplitRule = SiteSplit | FractionSplit


def assemble(
    intervals: Sequence[Interval], rule: SplitRule, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Split intervals into train/eval datasets with a shared metadata vocabulary."""
    if not intervals:
        raise ValueError("cannot assemble an empty interval list")
    if isinstance(rule, SiteSplit):
        train = [iv for iv in intervals if iv.meta.site in rule.train_sites]
        eval_ = [iv for iv in intervals if iv.meta.site in rule.eval_sites]
    else:
        by_experiment: dict[str, list[Interval]] = {}
        for iv in intervals:
            by_experiment.setdefault(iv.meta.experiment_id, []).append(iv)
        ordered = sorted(by_experiment)
        rng = np.random.default_rng(seed)
        shuffled = [ordered[i] for i in rng.permutation(len(ordered))]
        target = rule.train_fraction * len(intervals)
        train, eval_ = [], []
        placed = 0
        for exp_id in shuffled:
            group = by_experiment[exp_id]
            if placed < target:
                train.extend(group)
                placed += len(group)
            else:
                eval_.extend(group)
    if not train or not eval_:
        raise ConfigurationError(
            f"split rule left an empty side (train={len(train)}, eval={len(eval_)})"
        )
    vocab = MetadataVocab.from_metas([iv.meta for iv in train] + [iv.meta for iv in eval_])
    train_ds = Dataset(kind="interval", samples=train, vocab=vocab, split_tag="train")
    eval_ds = Dataset(kind="interval", samples=eval_, vocab=vocab, split_tag="eval")
    return train_ds, eval_ds
