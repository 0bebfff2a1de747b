"""Live pipeline: ingest -> coarse-grain -> standardize -> detect -> classify,
with event persistence and a broadcast hub for subscribers.

Concurrency contract: exactly one thread advances the pipeline (the detector
agent).  API handlers read immutable snapshots and enqueue control mutations
(threshold changes) that the agent applies between ticks; event labeling goes
straight to the store under its lock.  Subscribers receive every event record
and a bounded queue of score records with an exact drop counter.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, fields
from pathlib import Path
from queue import Empty, SimpleQueue

import numpy as np

from gridwatch import ingest
from gridwatch.detector import Detector, event_feature_scores
from gridwatch.eventlog import AppendLog
from gridwatch.features import FEATURE_COLUMNS, extract_features, write_feature_csv
from gridwatch.ingest import ChannelVector, parse_csv_stream, derive_channels
from gridwatch.preprocess import de_standardize, fit_standardization, standardize
from gridwatch.tree import DecisionTree
from gridwatch.varmodel import fit_var

log = logging.getLogger("gridwatch.pipeline")

ENV_PREFIX = "GRIDWATCH_"
K = ingest.K


@dataclass(frozen=True)
class PipelineConfig:
    resolution_s: float = 0.5
    tau_minutes: float = 10.0
    lag_p: int = 1
    threshold_t: float = 12.0
    q: int = 10
    feature_window_s: float = 5.0
    input_csv: str | None = None
    replay_speed: float = 0.0  # 0 runs as fast as the machine allows
    scenario: str | None = None
    input_rate_hz: float = 30.0
    listen: str = "127.0.0.1:8471"
    persist_dir: str = "./gridwatch-data"
    classifier: str | None = None
    snapshot_minutes: float = 5.0
    score_queue: int = 4096

    def __post_init__(self):
        self.validate()

    @property
    def window_points(self) -> int:
        return int(round(self.tau_minutes * 60.0 / self.resolution_s))

    @property
    def feature_window_points(self) -> int:
        return int(round(self.feature_window_s / self.resolution_s))

    @property
    def block_points(self) -> int:
        return int(round(self.input_rate_hz * self.resolution_s))

    def validate(self) -> "PipelineConfig":
        w = self.tau_minutes * 60.0 / self.resolution_s
        if abs(w - round(w)) > 1e-9 or round(w) < K * self.lag_p + 2:
            raise ValueError("tau_minutes*60/resolution_s must be an integer >= K*lag_p+2")
        if self.q * self.resolution_s > self.feature_window_s + 1e-12:
            raise ValueError("q*resolution_s must not exceed feature_window_s")
        if self.threshold_t <= 0:
            raise ValueError("threshold_t must be positive")
        b = self.input_rate_hz * self.resolution_s
        if abs(b - round(b)) > 1e-9 or round(b) < 1:
            raise ValueError("input_rate_hz*resolution_s must be a positive integer")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def load(cls, path=None, overrides: dict | None = None, env=None) -> "PipelineConfig":
        """Defaults, then config file pairs, then GRIDWATCH_* environment
        variables, then explicit overrides."""
        env = os.environ if env is None else env
        values: dict = {}
        if path is not None:
            for key, value in ingest.read_kv_file(Path(path).read_text(encoding="utf-8")):
                values[key] = value
        for f in fields(cls):
            env_key = ENV_PREFIX + f.name.upper()
            if env_key in env:
                values[f.name] = env[env_key]
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(known[key].type, value)
        return cls(**kwargs).validate()


def _coerce(annotation: str, value):
    if value is None or not isinstance(value, str):
        return value
    if annotation.startswith("float"):
        return float(value)
    if annotation.startswith("int"):
        return int(value)
    return value


class EventStore:
    """Thread-safe event/label store backed by the append-only log."""

    def __init__(self, log_file: AppendLog | None):
        self._log = log_file
        self._lock = threading.Lock()
        self.events: dict = {}
        self.labels: list = []
        self.threshold_journal: list = []
        if log_file is not None:
            for record in log_file.records:
                self._apply(record)

    def _apply(self, record: dict):
        kind = record.get("type")
        if kind == "event":
            self.events[int(record["id"])] = record
        elif kind == "label":
            self.labels.append(record)
        elif kind == "threshold":
            self.threshold_journal.append(record)

    def _append(self, record: dict):
        if self._log is not None:
            self._log.append(record)

    @property
    def next_event_id(self) -> int:
        with self._lock:
            return max(self.events.keys(), default=0) + 1

    def add_event(self, record: dict):
        with self._lock:
            self.events[int(record["id"])] = record
            self._append(record)

    def add_threshold_change(self, value: float, operator: str, timestamp: str):
        record = {"type": "threshold", "value": value, "operator": operator, "timestamp": timestamp}
        with self._lock:
            self.threshold_journal.append(record)
            self._append(record)
        return record

    def add_label(self, event_id: int, class_label: str, operator: str, labeled_at: str):
        if class_label not in ingest.ANOMALY_CLASSES:
            raise ValueError(f"unknown class {class_label!r}")
        with self._lock:
            if event_id not in self.events:
                raise KeyError(f"no event with id {event_id}")
            record = {
                "type": "label",
                "event_id": event_id,
                "class_label": class_label,
                "operator": operator,
                "labeled_at": labeled_at,
            }
            self.labels.append(record)
            self._append(record)
        return record

    def operator_label(self, event_id: int) -> dict | None:
        """Latest label record for the event, if any (last write wins)."""
        found = None
        for record in self.labels:
            if record["event_id"] == event_id:
                found = record
        return found

    def effective_label(self, record: dict) -> tuple:
        op = self.operator_label(int(record["id"]))
        if op is not None:
            return op["class_label"], "operator"
        return record.get("class_label"), record.get("label_source")

    def events_since(self, since_id: int = 0) -> list:
        with self._lock:
            ids = sorted(i for i in self.events if i > since_id)
            out = []
            for i in ids:
                record = dict(self.events[i])
                label, source = self.effective_label(record)
                record["class_label"], record["label_source"] = label, source
                out.append(record)
            return out

    def get(self, event_id: int) -> dict | None:
        with self._lock:
            record = self.events.get(event_id)
            if record is None:
                return None
            record = dict(record)
            record["class_label"], record["label_source"] = self.effective_label(record)
            return record

    def export_feature_rows(self) -> list:
        """(event_id, label, feature mapping) for every labeled event."""
        with self._lock:
            rows = []
            for i in sorted(self.events):
                record = self.events[i]
                label, _ = self.effective_label(record)
                if label is None or "features" not in record:
                    continue
                rows.append((i, label, record["features"]))
            return rows


class _FeatureRow:
    """Adapter so stored feature dicts can be serialized like FeatureVectors."""

    def __init__(self, mapping: dict):
        self._m = mapping

    def __getattr__(self, name):
        try:
            return self._m[name]
        except KeyError as exc:
            raise AttributeError(name) from exc


class Subscription:
    """One subscriber's view of the record stream.

    Event records are never dropped; score records beyond the queue bound
    evict the oldest queued score and bump the drop counter.
    """

    DROPPABLE = ("score", "raw")

    def __init__(self, hub: "StreamHub", max_scores: int):
        self._hub = hub
        self._max_scores = max_scores
        self._cond = threading.Condition()
        self._queue: deque = deque()
        self._score_count = 0
        self.dropped_scores = 0
        self.closed = False

    def _put(self, record: dict, droppable: bool):
        with self._cond:
            if self.closed:
                return
            if droppable:
                if self._score_count >= self._max_scores:
                    for i, (kind, _) in enumerate(self._queue):
                        if kind == "droppable":
                            del self._queue[i]
                            break
                    self.dropped_scores += 1
                    self._score_count -= 1
                self._score_count += 1
            self._queue.append(("droppable" if droppable else "event", record))
            self._cond.notify()

    def next_batch(self, timeout: float = 1.0) -> list:
        """Drain queued records in arrival order; empty list on timeout."""
        with self._cond:
            if not self._queue:
                self._cond.wait(timeout)
            out = []
            while self._queue:
                kind, record = self._queue.popleft()
                if kind == "droppable":
                    self._score_count -= 1
                out.append(record)
            return out

    def close(self):
        with self._cond:
            self.closed = True
            self._cond.notify()
        self._hub.unsubscribe(self)


class StreamHub:
    """Fan-out of score/event records plus a join-time snapshot."""

    def __init__(self, snapshot_points: int, score_queue: int):
        self._lock = threading.Lock()
        self._subs: list = []
        self._score_queue = score_queue
        self.recent_scores: deque = deque(maxlen=snapshot_points)
        self.recent_raw: deque = deque(maxlen=snapshot_points)
        self.snapshot_provider = lambda: {}

    def subscribe(self) -> tuple:
        with self._lock:
            sub = Subscription(self, self._score_queue)
            self._subs.append(sub)
            snapshot = {
                "type": "snapshot",
                "recent_scores": list(self.recent_scores),
                "recent_raw": list(self.recent_raw),
                **self.snapshot_provider(),
            }
            return sub, snapshot

    def unsubscribe(self, sub: Subscription):
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, record: dict, droppable: bool = False):
        with self._lock:
            if droppable:
                recent = self.recent_raw if record.get("type") == "raw" else self.recent_scores
                recent.append(record)
            subs = list(self._subs)
        for sub in subs:
            sub._put(record, droppable)


class Pipeline:
    """Single-writer streaming pipeline over one PMU stream."""

    def __init__(self, config: PipelineConfig, classifier: DecisionTree | None = None, persist: bool = True):
        self.config = config.validate()
        self.persist_dir = Path(config.persist_dir)
        self._log = AppendLog(self.persist_dir / "events.log") if persist else None
        self.store = EventStore(self._log)
        snapshot_points = int(round(config.snapshot_minutes * 60.0 / config.resolution_s))
        self.hub = StreamHub(snapshot_points, config.score_queue)
        self.hub.snapshot_provider = self._snapshot_payload
        self._classifier = classifier
        self._classifier_thread: threading.Thread | None = None
        if classifier is None and config.classifier:
            import json

            self._classifier = DecisionTree.from_dict(json.loads(Path(config.classifier).read_text()))
        elif classifier is None:
            # train the default classifier off the agent thread so the first
            # event close does not stall the stream
            self._classifier_thread = threading.Thread(target=self._train_default_classifier, daemon=True)
            self._classifier_thread.start()
        self._controls: SimpleQueue = SimpleQueue()
        self._stop = threading.Event()
        self._threshold = config.threshold_t
        self.window = config.window_points
        self.ticks = 0
        self.lateness = 0
        self.finished = False
        self.detector: Detector | None = None
        self._params = None
        self._model_view: dict = {}
        self._raw_window: deque = deque(maxlen=self.window)
        self._ticks_since_fit = 0
        self._event_raw_pending: list = []
        self._event_start_index = 0
        self._recent_raw: deque = deque(maxlen=4 * self.config.feature_window_points)

    # -- sources -------------------------------------------------------------

    def _source_vectors(self):
        if self.config.scenario:
            text = Path(self.config.scenario).read_text(encoding="utf-8")
            yield from ingest.synthesize_scenario(ingest.parse_scenario(text))
        elif self.config.input_csv:
            with open(self.config.input_csv, "rb") as fh:
                for sample in parse_csv_stream(fh):
                    yield derive_channels(sample)
        else:
            raise ValueError("config must name input_csv or scenario")

    def _coarse_stream(self):
        block = self.config.block_points
        buf: list = []
        for cv in self._source_vectors():
            buf.append(cv)
            if len(buf) == block:
                values = np.mean([c.values for c in buf], axis=0)
                yield ChannelVector(timestamp=buf[0].timestamp, values=values)
                buf = []

    # -- control surface (called from API threads) ---------------------------

    def request_threshold(self, value: float, operator: str = "operator") -> dict:
        if not value > 0:
            raise ValueError("threshold must be positive")
        self._controls.put(("threshold", float(value), operator))
        return {"ok": True, "value": float(value), "applies": "next tick"}

    def label_event(self, event_id: int, class_label: str, operator: str, labeled_at: str) -> dict:
        return self.store.add_label(event_id, class_label, operator, labeled_at)

    @property
    def threshold(self) -> float:
        return self._threshold

    def model_view(self) -> dict:
        return dict(self._model_view)

    def export_features_csv(self) -> str:
        rows = [(i, label, _FeatureRow(m)) for i, label, m in self.store.export_feature_rows()]
        return write_feature_csv(rows)

    def _snapshot_payload(self) -> dict:
        return {"model": self.model_view(), "threshold": self._threshold, "ticks": self.ticks}

    def _train_default_classifier(self):
        from gridwatch.corpus import CorpusConfig, build_corpus
        from gridwatch.tree import train_tree

        log.info("training default classifier on a synthetic corpus")
        # train at the live threshold so threshold-relative features
        # (count above, return index) mean the same thing at predict time
        corpus_config = CorpusConfig(
            n_events=200,
            seed=0,
            threshold=self.config.threshold_t,
            magnitude_range=(max(5.0, self.config.threshold_t), 50.0),
        )
        labels, X, _ = build_corpus(corpus_config)
        self._default_classifier = train_tree(X, labels)

    def _ensure_classifier(self) -> DecisionTree:
        if self._classifier is None:
            self._classifier_thread.join()
            self._classifier = self._default_classifier
        return self._classifier

    # -- the agent loop -------------------------------------------------------

    def run(self):
        """Consume the configured source to exhaustion (or until stop())."""
        budget = None
        if self.config.replay_speed > 0:
            budget = self.config.resolution_s / self.config.replay_speed
        last = time.perf_counter()
        try:
            for cv in self._coarse_stream():
                if self._stop.is_set():
                    break
                t0 = time.perf_counter()
                self._tick(cv)
                elapsed = time.perf_counter() - t0
                if budget is not None:
                    if elapsed > budget:
                        self.lateness += 1
                        log.warning("tick %d overran its %.3fs budget (%.3fs)", self.ticks, budget, elapsed)
                    remaining = budget - (time.perf_counter() - last)
                    if remaining > 0:
                        time.sleep(remaining)
                    last = time.perf_counter()
        finally:
            self.finished = True
            self.hub.publish({"type": "end", "ticks": self.ticks})

    def stop(self):
        self._stop.set()

    def close(self):
        """Release the persistence log (labels keep appending until then)."""
        if self._log is not None:
            self._log.close()

    def _tick(self, cv: ChannelVector):
        self._drain_controls(cv)
        if self.detector is None:
            self._raw_window.append(cv.values)
            if len(self._raw_window) == self.window:
                self._initial_fit()
        else:
            self._process(cv)
        self.ticks += 1

    def _drain_controls(self, cv: ChannelVector):
        while True:
            try:
                kind, value, operator = self._controls.get_nowait()
            except Empty:
                return
            if kind == "threshold":
                self._threshold = value
                if self.detector is not None:
                    self.detector.set_threshold(value)
                record = self.store.add_threshold_change(value, operator, cv.timestamp.isoformat())
                self.hub.publish({"type": "threshold", **{k: record[k] for k in ("value", "operator", "timestamp")}})

    def _refit(self):
        window = np.array(self._raw_window)
        self._params = fit_standardization(window)
        z_window = standardize(window, self._params)
        model = fit_var(z_window, self.config.lag_p)
        if self.detector is None:
            self.detector = Detector(
                model,
                z_window,
                threshold=self._threshold,
                q=self.config.q,
                feature_window=self.config.feature_window_points,
                start_event_id=self.store.next_event_id,
            )
        else:
            self.detector.refresh(model, z_window)
        self._ticks_since_fit = 0
        self._model_view = {
            "var": {
                "p": model.p,
                "K": model.K,
                "c": model.c.tolist(),
                "A": model.coefs.tolist(),
                "Sigma": model.sigma.tolist(),
                "trained_on": model.trained_on,
            },
            "standardization": self._params.to_dict(),
            "fit_tick": self.ticks,
        }

    def _initial_fit(self):
        self._refit()
        self.hub.publish({"type": "ready", "tick": self.ticks})

    def _process(self, cv: ChannelVector):
        index = self.window + self._ticks_since_fit
        z = standardize(cv.values, self._params, start_index=index)[0]
        self._recent_raw.append(cv)
        result = self.detector.step(z, cv.timestamp)
        self.hub.publish(
            {
                "type": "raw",
                "timestamp": cv.timestamp.isoformat(),
                "V": float(cv.values[0]),
                "I": float(cv.values[1]),
                "sin_diff": float(cv.values[2]),
                "F": float(cv.values[3]),
            },
            droppable=True,
        )
        self.hub.publish({"type": "score", **result.score.to_record()}, droppable=True)
        if result.opened is not None:
            self._event_raw_pending = [cv.values]
            self._event_start_index = index
            self.hub.publish(
                {
                    "type": "event_open",
                    "id": result.opened.event_id,
                    "start": cv.timestamp.isoformat(),
                    "trigger_set": sorted(result.opened.trigger_set),
                    "threshold": result.opened.threshold,
                }
            )
        elif self.detector.mode == Detector.ANOMALY or result.closed is not None:
            self._event_raw_pending.append(cv.values)
        if result.closed is not None:
            self._mirror_event_window(result)
            self._finalize_event(result.closed)
        elif result.appended:
            self._raw_window.append(cv.values)
        self._ticks_since_fit += 1
        if self.detector.model_stale and self.detector.mode == Detector.NORMAL:
            self._refit()

    def _mirror_event_window(self, result):
        """Keep the physical-unit window in lockstep with the detector's
        standardized buffer across an event close."""
        for offset, (vec, imputed) in enumerate(result.appended):
            if imputed:
                raw = de_standardize(vec, self._params, start_index=self._event_start_index + offset)[0]
            else:
                raw = self._event_raw_pending[offset]
            self._raw_window.append(raw)

    def _finalize_event(self, event):
        channel, scores = event_feature_scores(event)
        features = extract_features(scores, event.threshold)
        tree = self._ensure_classifier()
        predicted, path = tree.predict(features.as_array())
        event.features = features
        event.feature_channel = channel
        event.class_label = predicted
        event.label_source = "model"
        event.decision_path = path
        n_raw = len(event.score_window)
        raw_window = np.stack(self._event_raw_pending[:n_raw])
        event.raw_window = raw_window
        record = {
            "type": "event",
            "id": event.event_id,
            "start": event.start_timestamp.isoformat(),
            "end": event.end_timestamp.isoformat(),
            "trigger_set": sorted(event.trigger_set),
            "threshold": event.threshold,
            "returned": bool(event.returned),
            "feature_channel": channel,
            "scores": [s.to_record() for s in event.score_window],
            "raw_window": [row.tolist() for row in raw_window],
            "features": {name: getattr(features, name) for name in FEATURE_COLUMNS},
            "class_label": predicted,
            "label_source": "model",
            "decision_path": path.to_dict(),
        }
        self.store.add_event(record)
        self._event_raw_pending = []
        self.hub.publish({**record, "type": "event_close"})

    def health(self) -> dict:
        return {
            "status": "ok",
            "ticks": self.ticks,
            "warmed_up": self.detector is not None,
            "mode": self.detector.mode if self.detector is not None else "WARMUP",
            "events": len(self.store.events),
            "threshold": self._threshold,
            "lateness": self.lateness,
            "finished": self.finished,
        }
