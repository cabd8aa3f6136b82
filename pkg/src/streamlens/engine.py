"""Per-instance pipeline and operator controls.

The engine owns all mutable state: the forest, the sliding window, the
per-feature explanation states, the live threshold and feature masks,
plus the session log, operator labels and run-boundary marks. Each
instance is scored against the trees as they stood on arrival (before it
is learned), explained, learned, and the oldest window point expired.

One logical writer: ``process`` and every control mutation serialize on
an internal lock, so control changes land between instances and take
effect from the next one. Readers get plain-data snapshots.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from streamlens.explain import ExplainConfig, Explainer
from streamlens.forest import ConfigError, ForestConfig, OnlineIsolationForest
from streamlens.ingest import FEATURE_SCHEMA, Instance
from streamlens.window import WindowStore

VERDICTS = ("confirmed_fault", "normal", "unknown")

SNAPSHOT_KIND = "streamlens.engine"


class InsufficientLabels(ValueError):
    """Threshold suggestion needs at least one fault and one normal label."""


def _now_ms() -> int:
    return int(time.time() * 1000)


@dataclass
class EngineConfig:
    feature_names: tuple[str, ...] = FEATURE_SCHEMA
    forest: ForestConfig = field(default_factory=ForestConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    threshold: float = 0.7
    warmup: int | None = None  # default: window // 4
    event_gap: int = 5

    def __post_init__(self):
        self.feature_names = tuple(str(n) for n in self.feature_names)
        if not self.feature_names:
            raise ConfigError("feature_names must not be empty")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ConfigError("feature_names must be unique")
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.warmup is None:
            self.warmup = self.forest.window // 4
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        if self.event_gap < 0:
            raise ConfigError(f"event_gap must be >= 0, got {self.event_gap}")

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "forest": self.forest.to_dict(),
            "explain": self.explain.to_dict(),
            "threshold": self.threshold,
            "warmup": self.warmup,
            "event_gap": self.event_gap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        return cls(
            feature_names=tuple(d.get("feature_names", FEATURE_SCHEMA)),
            forest=ForestConfig.from_dict(d["forest"]) if "forest" in d else ForestConfig(),
            explain=ExplainConfig.from_dict(d["explain"]) if "explain" in d else ExplainConfig(),
            threshold=d.get("threshold", 0.7),
            warmup=d.get("warmup"),
            event_gap=d.get("event_gap", 5),
        )


@dataclass(frozen=True)
class ScoredRecord:
    instance_id: int
    timestamp: int
    score: float
    mean_depth: float
    fi: tuple[float, ...]
    flagged: bool
    threshold_used: float
    warmup: bool

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "timestamp": self.timestamp,
            "score": self.score,
            "mean_depth": self.mean_depth,
            "fi": list(self.fi),
            "flagged": self.flagged,
            "threshold_used": self.threshold_used,
            "warmup": self.warmup,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredRecord":
        return cls(
            instance_id=d["instance_id"],
            timestamp=d["timestamp"],
            score=d["score"],
            mean_depth=d["mean_depth"],
            fi=tuple(d["fi"]),
            flagged=d["flagged"],
            threshold_used=d["threshold_used"],
            warmup=d["warmup"],
        )


@dataclass(frozen=True)
class Event:
    event_id: int
    from_id: int
    to_id: int
    peak_score: float
    peak_id: int
    top_features: tuple[str, ...]
    n_flagged: int

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "from": self.from_id,
            "to": self.to_id,
            "peak_score": self.peak_score,
            "peak_id": self.peak_id,
            "top_features": list(self.top_features),
            "n_flagged": self.n_flagged,
        }


@dataclass(frozen=True)
class EventLabel:
    event_id: int
    from_id: int
    to_id: int
    verdict: str
    note: str = ""
    created_at: int = 0

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if self.from_id > self.to_id:
            raise ValueError(f"empty label range [{self.from_id}, {self.to_id}]")

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "from": self.from_id,
            "to": self.to_id,
            "verdict": self.verdict,
            "note": self.note,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EventLabel":
        return cls(
            event_id=d.get("event_id", 0),
            from_id=d["from"],
            to_id=d["to"],
            verdict=d["verdict"],
            note=d.get("note", ""),
            created_at=d.get("created_at", 0),
        )

    def overlaps(self, other: "EventLabel") -> bool:
        return not (self.to_id < other.from_id or self.from_id > other.to_id)


@dataclass(frozen=True)
class RunMark:
    at_id: int
    note: str
    created_at: int

    def to_dict(self) -> dict:
        return {"at_id": self.at_id, "note": self.note, "created_at": self.created_at}


class Engine:
    """Sequential stream processor with operator controls.

    Args:
        config: full pipeline configuration.
        session_dir: when given, records / labels / marks are appended to
            line-delimited JSON files under it as they happen.
        backend: forwarded to the forest's descent kernels.
    """

    def __init__(self, config: EngineConfig, session_dir=None, backend=None):
        self.config = config
        self.forest = OnlineIsolationForest(config.forest, config.dim, backend=backend)
        self.window = WindowStore(config.dim)
        self.explainer = Explainer(config.dim, config.explain)
        self.threshold = float(config.threshold)
        self.records: list[ScoredRecord] = []
        self.labels: list[EventLabel] = []
        self.run_marks: list[RunMark] = []
        self._lock = threading.RLock()
        self._listeners: list[Callable[[str, dict], None]] = []
        self._last_id: int | None = None
        self._processed = 0
        self._event_count = 0
        self._open_event: dict | None = None

        self._sinks: dict[str, object] = {}
        if session_dir is not None:
            d = Path(session_dir)
            d.mkdir(parents=True, exist_ok=True)
            for name in ("records", "labels", "marks"):
                self._sinks[name] = open(d / f"{name}.jsonl", "w", encoding="utf-8")

    # -- wiring ------------------------------------------------------------

    def subscribe(self, listener: Callable[[str, dict], None]) -> None:
        """Register a (kind, payload) callback fired inside the processing
        lock; listeners must be fast and non-blocking."""
        self._listeners.append(listener)

    def unsubscribe(self, listener) -> None:
        if listener in self._listeners:
            self._listeners.remove(listener)

    def _notify(self, kind: str, payload: dict) -> None:
        for listener in list(self._listeners):
            listener(kind, payload)

    def _persist(self, sink: str, payload: dict) -> None:
        fh = self._sinks.get(sink)
        if fh is not None:
            fh.write(json.dumps(payload) + "\n")

    def close(self) -> None:
        for fh in self._sinks.values():
            fh.flush()
            fh.close()
        self._sinks.clear()

    # -- the pipeline --------------------------------------------------------

    def process(self, instance: Instance) -> ScoredRecord:
        """Score, explain, learn, expire; returns the appended record."""
        with self._lock:
            iid = int(instance.id)
            if self._last_id is not None and iid <= self._last_id:
                raise ValueError(
                    f"out-of-order instance id {iid} (last was {self._last_id})"
                )
            xv = self.forest.validate_vector(instance.x)

            anomaly = self.forest.score(xv)

            extents = []
            for j in range(self.config.dim):
                v = float(xv[j])
                if len(self.window):
                    lo, hi = self.window.min_max(j)
                    extents.append((min(lo, v), max(hi, v)))
                else:
                    extents.append((v, v))
            fi = self.explainer.explain(self.forest, xv, extents, iid)

            self.forest.learn(iid, xv)
            self.window.push(Instance(id=iid, timestamp=int(instance.timestamp), x=xv))
            if len(self.window) > self.config.forest.window:
                oldest = self.window.popleft()
                self.forest.forget(oldest.id, oldest.x)

            warmup = self._processed < self.config.warmup
            flagged = (anomaly.score > self.threshold) and not warmup
            record = ScoredRecord(
                instance_id=iid,
                timestamp=int(instance.timestamp),
                score=float(anomaly.score),
                mean_depth=float(anomaly.mean_depth),
                fi=tuple(float(v) for v in fi.values),
                flagged=flagged,
                threshold_used=self.threshold,
                warmup=warmup,
            )
            self.records.append(record)
            self._processed += 1
            self._last_id = iid
            self._persist("records", record.to_dict())
            self._notify("record", record.to_dict())
            if flagged:
                self._track_event(record)
            return record

    def _track_event(self, record: ScoredRecord) -> None:
        ev = self._open_event
        if ev is not None and record.instance_id - ev["to"] <= self.config.event_gap:
            ev["to"] = record.instance_id
            ev["n_flagged"] += 1
            if record.score > ev["peak_score"]:
                ev["peak_score"] = record.score
                ev["peak_id"] = record.instance_id
                ev["top_features"] = self._top_features(record.fi)
        else:
            self._event_count += 1
            ev = {
                "event_id": self._event_count,
                "from": record.instance_id,
                "to": record.instance_id,
                "peak_score": record.score,
                "peak_id": record.instance_id,
                "top_features": self._top_features(record.fi),
                "n_flagged": 1,
            }
            self._open_event = ev
        self._notify("event", dict(ev))

    def _top_features(self, fi: tuple[float, ...], k: int = 3) -> list[str]:
        order = np.argsort(-np.asarray(fi), kind="stable")[:k]
        return [self.config.feature_names[int(j)] for j in order]

    # -- operator controls ---------------------------------------------------

    def set_threshold(self, value: float) -> None:
        """New flagging threshold, effective from the next instance."""
        value = float(value)
        if not (0.0 < value < 1.0):
            raise ValueError(f"threshold must be in (0, 1), got {value}")
        with self._lock:
            self.threshold = value

    def set_feature_enabled(self, j: int, enabled: bool) -> None:
        """Toggle a feature for both splitting and explanation.

        A disabled feature's fi freezes at its last value; at least one
        feature must stay enabled.
        """
        with self._lock:
            if not 0 <= j < self.config.dim:
                raise IndexError(f"feature index {j} out of range")
            mask = list(self.explainer.enabled)
            if not enabled and mask[j] and sum(mask) == 1:
                raise ValueError("cannot disable the last enabled feature")
            mask[j] = bool(enabled)
            self.explainer.enabled = mask
            self.forest.set_feature_mask(np.asarray(mask, dtype=bool))

    def feature_index(self, name: str) -> int:
        try:
            return self.config.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    # -- events and labels ----------------------------------------------------

    def coalesce_events(self) -> list[Event]:
        """Flagged records grouped into events by the id-gap rule."""
        with self._lock:
            events: list[Event] = []
            cur: dict | None = None
            for rec in self.records:
                if not rec.flagged:
                    continue
                if cur is not None and rec.instance_id - cur["to"] <= self.config.event_gap:
                    cur["to"] = rec.instance_id
                    cur["n_flagged"] += 1
                    if rec.score > cur["peak_score"]:
                        cur["peak_score"] = rec.score
                        cur["peak_id"] = rec.instance_id
                        cur["top_features"] = self._top_features(rec.fi)
                else:
                    if cur is not None:
                        events.append(self._event_from(cur, len(events) + 1))
                    cur = {
                        "to": rec.instance_id,
                        "from": rec.instance_id,
                        "peak_score": rec.score,
                        "peak_id": rec.instance_id,
                        "top_features": self._top_features(rec.fi),
                        "n_flagged": 1,
                    }
            if cur is not None:
                events.append(self._event_from(cur, len(events) + 1))
            return events

    @staticmethod
    def _event_from(cur: dict, event_id: int) -> Event:
        return Event(
            event_id=event_id,
            from_id=cur["from"],
            to_id=cur["to"],
            peak_score=cur["peak_score"],
            peak_id=cur["peak_id"],
            top_features=tuple(cur["top_features"]),
            n_flagged=cur["n_flagged"],
        )

    def label_event(self, label: EventLabel) -> EventLabel:
        """Persist an operator verdict; overlapping labels are replaced."""
        with self._lock:
            if not self.records:
                raise ValueError("cannot label an empty session")
            first = self.records[0].instance_id
            last = self.records[-1].instance_id
            if label.from_id < first or label.to_id > last:
                raise ValueError(
                    f"label range [{label.from_id}, {label.to_id}] outside "
                    f"session range [{first}, {last}]"
                )
            if label.created_at == 0:
                label = EventLabel(
                    event_id=label.event_id,
                    from_id=label.from_id,
                    to_id=label.to_id,
                    verdict=label.verdict,
                    note=label.note,
                    created_at=_now_ms(),
                )
            self.labels = [old for old in self.labels if not old.overlaps(label)]
            self.labels.append(label)
            self._persist("labels", label.to_dict())
            return label

    def _verdict_for(self, instance_id: int) -> str | None:
        for label in self.labels:
            if label.from_id <= instance_id <= label.to_id:
                return label.verdict
        return None

    def suggest_threshold(self) -> float:
        """Threshold candidate maximizing F1 over the labeled records.

        Candidates are the midpoints between consecutive distinct scores
        of labeled records; ties prefer the largest threshold (fewest
        alarms).
        """
        with self._lock:
            scored: list[tuple[float, bool]] = []
            for rec in self.records:
                verdict = self._verdict_for(rec.instance_id)
                if verdict == "confirmed_fault":
                    scored.append((rec.score, True))
                elif verdict == "normal":
                    scored.append((rec.score, False))
            n_fault = sum(1 for _, fault in scored if fault)
            n_normal = len(scored) - n_fault
            if n_fault == 0 or n_normal == 0:
                raise InsufficientLabels(
                    "need at least one confirmed_fault and one normal labeled record"
                )
            distinct = sorted({s for s, _ in scored})
            candidates = [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
            if not candidates:
                candidates = [distinct[0]]
            best_theta = candidates[0]
            best_f1 = -1.0
            for theta in candidates:
                tp = sum(1 for s, fault in scored if fault and s > theta)
                fp = sum(1 for s, fault in scored if not fault and s > theta)
                fn = n_fault - tp
                denom = 2 * tp + fp + fn
                f1 = (2 * tp / denom) if denom else 0.0
                if f1 >= best_f1:
                    best_f1 = f1
                    best_theta = theta
            return best_theta

    def mark_run_boundary(self, note: str = "") -> RunMark:
        with self._lock:
            mark = RunMark(
                at_id=self._last_id if self._last_id is not None else 0,
                note=str(note),
                created_at=_now_ms(),
            )
            self.run_marks.append(mark)
            self._persist("marks", mark.to_dict())
            self._notify("mark", mark.to_dict())
            return mark

    # -- snapshots -----------------------------------------------------------

    def pdp_snapshot(self, feature_name: str) -> dict:
        from streamlens.explain import pdp_snapshot

        with self._lock:
            j = self.feature_index(feature_name)
            return pdp_snapshot(self.explainer.states[j], feature_name)

    def snapshot(self, last_n: int = 1000) -> dict:
        """Plain-data copy of the observable engine state."""
        with self._lock:
            return {
                "kind": SNAPSHOT_KIND,
                "version": 1,
                "config": self.config.to_dict(),
                "threshold": self.threshold,
                "features": [
                    {"name": name, "enabled": bool(en)}
                    for name, en in zip(self.config.feature_names, self.explainer.enabled)
                ],
                "records": [r.to_dict() for r in self.records[-last_n:]],
                "pdp": self.explainer.snapshot(self.config.feature_names),
                "events": [e.to_dict() for e in self.coalesce_events()],
                "labels": [l.to_dict() for l in self.labels],
                "run_marks": [m.to_dict() for m in self.run_marks],
                "processed": self._processed,
                "last_id": self._last_id,
            }
