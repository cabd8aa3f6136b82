"""Stream sources: file replay, synthetic generation, and the feature schema.

File replay reads CSV or line-delimited JSON with a header-driven column
mapping and yields instances with fresh monotonic ids. The synthetic
generator produces AR(1)-smoothed Gaussian features around per-regime
means with optional injected anomalies and an exact ground-truth map;
everything is deterministic per seed. A generated stream written to disk
and replayed reproduces the original values bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

# Engineered power-quality indices of the monitored machine, in wire order.
FEATURE_SCHEMA = (
    "Phase Current Balance",
    "Phase Voltage Stability",
    "Phase Power Balance",
    "Thermal Stress",
    "Current THD Spread",
    "Voltage Quality",
    "Phase Reactive Flow",
    "Phase Efficiency Ratio",
    "Phase Apparent Power",
)

ANOMALY_KINDS = ("step", "ramp")

SYNTHETIC_EPOCH_MS = 1_600_000_000_000
SYNTHETIC_PERIOD_MS = 1_000


def jacquard_schema() -> tuple[str, ...]:
    """The nine monitored feature names, in order."""
    return FEATURE_SCHEMA


@dataclass(frozen=True)
class Instance:
    """One timestamped feature vector of the stream."""

    id: int
    timestamp: int  # epoch milliseconds
    x: np.ndarray


@dataclass(frozen=True)
class ColumnMapping:
    timestamp: str
    features: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.features)) != len(self.features):
            raise ValueError("feature columns must be unique")
        if self.timestamp in self.features:
            raise ValueError("timestamp column cannot double as a feature")


@dataclass(frozen=True)
class Regime:
    start: int
    mean: tuple[float, ...]
    scale: tuple[float, ...]


@dataclass(frozen=True)
class Anomaly:
    start: int
    duration: int
    features: tuple[int, ...]
    magnitude: float
    kind: str = "step"


@dataclass
class SyntheticSpec:
    """Deterministic stream recipe: regimes, noise smoothing, anomalies."""

    dim: int
    length: int
    regimes: list[Regime]
    anomalies: list[Anomaly] = field(default_factory=list)
    smoothing: float = 0.6  # AR(1) coefficient of the noise
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.length < 1:
            raise ValueError(f"length must be >= 1, got {self.length}")
        if not (0.0 <= self.smoothing < 1.0):
            raise ValueError(f"smoothing must be in [0, 1), got {self.smoothing}")
        if not self.regimes:
            raise ValueError("at least one regime is required")
        regimes = [self._norm_regime(r) for r in self.regimes]
        if regimes[0].start != 0:
            raise ValueError("first regime must start at 0")
        starts = [r.start for r in regimes]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("regime starts must be strictly increasing")
        self.regimes = regimes
        anomalies = [self._norm_anomaly(a) for a in self.anomalies]
        for a in anomalies:
            if a.start < 0 or a.duration < 1 or a.start + a.duration > self.length:
                raise ValueError(
                    f"anomaly window [{a.start}, {a.start + a.duration}) "
                    f"falls outside the stream of length {self.length}"
                )
        self.anomalies = anomalies

    def _vec(self, v) -> tuple[float, ...]:
        if np.isscalar(v):
            return (float(v),) * self.dim
        out = tuple(float(f) for f in v)
        if len(out) != self.dim:
            raise ValueError(f"expected {self.dim} per-feature values, got {len(out)}")
        return out

    def _norm_regime(self, r) -> Regime:
        if isinstance(r, Regime):
            return Regime(int(r.start), self._vec(r.mean), self._vec(r.scale))
        return Regime(int(r["start"]), self._vec(r["mean"]), self._vec(r["scale"]))

    def _norm_anomaly(self, a) -> Anomaly:
        if not isinstance(a, Anomaly):
            a = Anomaly(
                start=int(a["start"]),
                duration=int(a["duration"]),
                features=tuple(int(j) for j in a["features"]),
                magnitude=float(a["magnitude"]),
                kind=a.get("kind", "step"),
            )
        else:
            a = Anomaly(int(a.start), int(a.duration), tuple(int(j) for j in a.features),
                        float(a.magnitude), a.kind)
        if a.kind not in ANOMALY_KINDS:
            raise ValueError(f"anomaly kind must be one of {ANOMALY_KINDS}, got {a.kind!r}")
        if any(j < 0 or j >= self.dim for j in a.features):
            raise ValueError(f"anomaly feature index out of range for dim {self.dim}")
        return a

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(
            dim=d["dim"],
            length=d["length"],
            regimes=list(d["regimes"]),
            anomalies=list(d.get("anomalies", [])),
            smoothing=d.get("smoothing", 0.6),
            seed=d.get("seed", 0),
        )


@dataclass(frozen=True)
class SourceSpec:
    """Where instances come from: a file to replay or a synthetic recipe."""

    kind: str  # csv | jsonl | synthetic
    path: str | None = None
    mapping: ColumnMapping | None = None
    rate: float | None = None  # instances per second; None = unthrottled
    synthetic: SyntheticSpec | None = None
    impute_last: bool = False

    def __post_init__(self):
        if self.kind not in ("csv", "jsonl", "synthetic"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "synthetic":
            if self.synthetic is None:
                raise ValueError("synthetic source requires a synthetic spec")
        else:
            if not self.path:
                raise ValueError(f"{self.kind} source requires a path")
            if self.mapping is None:
                raise ValueError(f"{self.kind} source requires a column mapping")
        if self.rate is not None and self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


class GroundTruth:
    """Instance id -> normal/anomaly, defined for every generated id."""

    def __init__(self, labels: dict[int, bool]):
        self._labels = labels

    def is_anomaly(self, instance_id: int) -> bool:
        return self._labels[instance_id]

    def ids(self) -> list[int]:
        return sorted(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for iid in self.ids():
                label = "anomaly" if self._labels[iid] else "normal"
                fh.write(json.dumps({"id": iid, "label": label}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "GroundTruth":
        labels = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                labels[int(rec["id"])] = rec["label"] == "anomaly"
        return cls(labels)


def gen_synthetic(spec: SyntheticSpec) -> tuple[list[Instance], GroundTruth]:
    """Generate the full stream plus its ground truth, deterministically.

    Per feature the noise is a stationary unit-variance AR(1) process;
    values are ``mean + scale * noise`` under the active regime, with
    anomalies adding ``magnitude * scale`` (stepped or ramped) to their
    affected features.
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.length, spec.dim
    eps = rng.standard_normal((n, d))
    phi = spec.smoothing
    noise = np.empty((n, d))
    noise[0] = eps[0]
    innov = math.sqrt(1.0 - phi * phi)
    for i in range(1, n):
        noise[i] = phi * noise[i - 1] + innov * eps[i]

    starts = np.array([r.start for r in spec.regimes])
    regime_idx = np.searchsorted(starts, np.arange(n), side="right") - 1
    means = np.array([r.mean for r in spec.regimes])[regime_idx]
    scales = np.array([r.scale for r in spec.regimes])[regime_idx]
    values = means + scales * noise

    truth = np.zeros(n, dtype=bool)
    for a in spec.anomalies:
        rows = np.arange(a.start, a.start + a.duration)
        if a.kind == "step":
            bump = np.full(a.duration, a.magnitude)
        else:  # ramp: linear climb from 0 up to the full magnitude
            bump = a.magnitude * np.arange(1, a.duration + 1) / a.duration
        for j in a.features:
            values[rows, j] += bump * scales[rows, j]
        truth[rows] = True

    instances = [
        Instance(
            id=i + 1,
            timestamp=SYNTHETIC_EPOCH_MS + i * SYNTHETIC_PERIOD_MS,
            x=values[i].copy(),
        )
        for i in range(n)
    ]
    labels = {i + 1: bool(truth[i]) for i in range(n)}
    return instances, GroundTruth(labels)


class RowError(ValueError):
    """A malformed row, with its position and offending column."""

    def __init__(self, row: int, column: str, reason: str):
        super().__init__(f"row {row}, column {column!r}: {reason}")
        self.row = row
        self.column = column


def _parse_rows(
    rows: Iterable[dict],
    mapping: ColumnMapping,
    impute_last: bool,
) -> Iterator[Instance]:
    last_valid: dict[str, float] = {}
    for i, row in enumerate(rows):
        rownum = i + 1
        for col in (mapping.timestamp, *mapping.features):
            if col not in row or row[col] in (None, ""):
                raise RowError(rownum, col, "missing value")
        try:
            ts = int(row[mapping.timestamp])
        except (TypeError, ValueError):
            raise RowError(rownum, mapping.timestamp, f"not an integer timestamp: {row[mapping.timestamp]!r}")
        x = np.empty(len(mapping.features))
        for j, col in enumerate(mapping.features):
            raw = row[col]
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise RowError(rownum, col, f"not a number: {raw!r}")
            if not math.isfinite(v):
                if impute_last and col in last_valid:
                    v = last_valid[col]
                else:
                    raise RowError(rownum, col, f"non-finite value: {raw!r}")
            last_valid[col] = v
            x[j] = v
        yield Instance(id=rownum, timestamp=ts, x=x)


def _iter_csv(path: str, mapping: ColumnMapping) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (mapping.timestamp, *mapping.features):
            if col not in header:
                raise ValueError(f"missing column {col!r} in {path}")
        yield from reader


def _iter_jsonl(path: str, mapping: ColumnMapping) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def validate_file_source(spec: SourceSpec) -> None:
    """Fail fast on a missing file or a header that misses mapped columns."""
    if spec.kind not in ("csv", "jsonl"):
        return
    if not Path(spec.path).exists():
        raise FileNotFoundError(spec.path)
    if spec.kind == "csv":
        with open(spec.path, "r", encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh), [])
        for col in (spec.mapping.timestamp, *spec.mapping.features):
            if col not in header:
                raise ValueError(f"missing column {col!r} in {spec.path}")


def open_file(spec: SourceSpec) -> Iterator[Instance]:
    """Replay a CSV/JSONL file as an instance stream with fresh ids 1..n."""
    if spec.kind not in ("csv", "jsonl"):
        raise ValueError(f"open_file cannot serve kind {spec.kind!r}")
    validate_file_source(spec)
    rows = _iter_csv(spec.path, spec.mapping) if spec.kind == "csv" else _iter_jsonl(spec.path, spec.mapping)
    return _parse_rows(rows, spec.mapping, spec.impute_last)


def open_source(spec: SourceSpec) -> Iterator[Instance]:
    """Any-kind instance stream, throttled to ``spec.rate`` if set."""
    if spec.kind == "synthetic":
        instances, _ = gen_synthetic(spec.synthetic)
        stream: Iterator[Instance] = iter(instances)
    else:
        stream = open_file(spec)
    if spec.rate is None:
        return stream
    return _throttle(stream, spec.rate)


def _throttle(stream: Iterator[Instance], rate: float) -> Iterator[Instance]:
    period = 1.0 / rate
    nxt = time.monotonic()
    for inst in stream:
        now = time.monotonic()
        if now < nxt:
            time.sleep(nxt - now)
        nxt = max(nxt + period, now)
        yield inst


def _format_value(v: float) -> str:
    # repr gives the shortest string that round-trips the float exactly
    return repr(float(v))


def write_csv(path, instances: Iterable[Instance], feature_names) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *feature_names])
        for inst in instances:
            writer.writerow([inst.timestamp, *(_format_value(v) for v in inst.x)])


def write_jsonl(path, instances: Iterable[Instance], feature_names) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            row = {"timestamp": inst.timestamp}
            row.update({name: float(v) for name, v in zip(feature_names, inst.x)})
            fh.write(json.dumps(row) + "\n")
