"""PMU stream ingest: CSV parsing, channel derivation, coarse-graining, and
synthetic ambient/anomaly generation.

The wire format is UTF-8 CSV with one header line:

    timestamp_iso8601,voltage_mag_v,voltage_angle_deg,current_mag_a,current_angle_deg,frequency_hz

The modeling vector has K=4 channels:

    [voltage_mag, current_mag, sin(voltage_angle - current_angle), frequency]
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from gridwatch.varmodel import VarModel, simulate

CSV_HEADER = "timestamp_iso8601,voltage_mag_v,voltage_angle_deg,current_mag_a,current_angle_deg,frequency_hz"
CHANNEL_NAMES = ("V", "I", "sin_diff", "F")
K = 4

ANOMALY_CLASSES = ("spike", "drop", "step", "oscillatory")


class CsvFormatError(ValueError):
    """Header line does not match the documented wire format."""


class CsvRowError(ValueError):
    """A data row could not be parsed; carries the 1-based file line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class CsvOrderError(CsvRowError):
    """Timestamps are not strictly increasing."""


def _normalize_angle(a: float) -> float:
    return (a + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class PmuSample:
    """One raw PMU measurement record.

    Angles are normalized to [-180, 180) degrees on construction.
    """

    timestamp: datetime
    voltage_mag: float
    voltage_angle: float
    current_mag: float
    current_angle: float
    frequency: float

    def __post_init__(self):
        for name in ("voltage_mag", "voltage_angle", "current_mag", "current_angle", "frequency"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.voltage_mag < 0:
            raise ValueError(f"voltage_mag must be >= 0, got {self.voltage_mag}")
        if self.current_mag < 0:
            raise ValueError(f"current_mag must be >= 0, got {self.current_mag}")
        if not self.frequency > 0:
            raise ValueError(f"frequency must be > 0, got {self.frequency}")
        object.__setattr__(self, "voltage_angle", _normalize_angle(self.voltage_angle))
        object.__setattr__(self, "current_angle", _normalize_angle(self.current_angle))


@dataclass(frozen=True)
class ChannelVector:
    """The derived K=4 modeling vector at one instant."""

    timestamp: datetime
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (K,):
            raise ValueError(f"expected {K} channel values, got shape {values.shape}")
        if not -1.0 <= values[2] <= 1.0:
            raise ValueError(f"sin_angle_diff must lie in [-1, 1], got {values[2]}")
        object.__setattr__(self, "values", values)


def derive_channels(sample: PmuSample) -> ChannelVector:
    """Map a raw sample to [Vmag, Imag, sin(Vangle - Iangle), freq]."""
    diff = math.radians(sample.voltage_angle - sample.current_angle)
    return ChannelVector(
        timestamp=sample.timestamp,
        values=np.array([sample.voltage_mag, sample.current_mag, math.sin(diff), sample.frequency]),
    )


def _parse_timestamp(text: str) -> datetime:
    # datetime.fromisoformat before 3.11 rejects a trailing Z
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def parse_csv_stream(
    stream, on_row_error: Callable[[CsvRowError], None] | None = None
) -> Iterator[PmuSample]:
    """Yield samples from a CSV byte or text stream in timestamp order.

    Malformed rows raise `CsvRowError` (with the file line number) unless
    `on_row_error` is given, in which case the error is reported to the
    callback and parsing continues.  A wrong header and out-of-order
    timestamps are always fatal.
    """
    if isinstance(stream, (bytes, str)):
        raw = stream
    else:
        raw = stream.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    lines = raw.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        got = lines[0].strip() if lines else "<empty>"
        raise CsvFormatError(f"header mismatch: expected {CSV_HEADER!r}, got {got!r}")
    reader = csv.reader(lines[1:])
    last_ts: datetime | None = None
    for offset, row in enumerate(reader):
        line_no = offset + 2
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            if len(row) != 6:
                raise ValueError(f"expected 6 fields, got {len(row)}")
            ts = _parse_timestamp(row[0])
            sample = PmuSample(
                timestamp=ts,
                voltage_mag=float(row[1]),
                voltage_angle=float(row[2]),
                current_mag=float(row[3]),
                current_angle=float(row[4]),
                frequency=float(row[5]),
            )
        except CsvRowError:
            raise
        except (ValueError, OverflowError) as exc:
            err = CsvRowError(line_no, str(exc))
            if on_row_error is None:
                raise err from exc
            on_row_error(err)
            continue
        if last_ts is not None and sample.timestamp <= last_ts:
            raise CsvOrderError(line_no, f"timestamp {sample.timestamp.isoformat()} not after {last_ts.isoformat()}")
        last_ts = sample.timestamp
        yield sample


def serialize_samples(samples: Iterable[PmuSample]) -> str:
    """Inverse of `parse_csv_stream`; float fields round-trip bit-exactly."""
    lines = [CSV_HEADER]
    for s in samples:
        lines.append(
            ",".join(
                [
                    s.timestamp.isoformat(),
                    repr(s.voltage_mag),
                    repr(s.voltage_angle),
                    repr(s.current_mag),
                    repr(s.current_angle),
                    repr(s.frequency),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def to_matrix(series: Sequence[ChannelVector]) -> np.ndarray:
    """Stack channel vectors into an (n, K) array."""
    if len(series) == 0:
        return np.empty((0, K))
    return np.stack([cv.values for cv in series])


def to_vectors(values: np.ndarray, timestamps: Sequence[datetime]) -> list[ChannelVector]:
    return [ChannelVector(timestamp=ts, values=row) for ts, row in zip(timestamps, values)]


def coarse_grain(
    series: Sequence[ChannelVector], input_rate_hz: float, resolution_s: float
) -> list[ChannelVector]:
    """Block-average a high-rate series down to the model resolution.

    The block size input_rate * resolution must be a positive integer.  Each
    output point is the per-channel mean of one complete block, stamped with
    the block's first timestamp; a trailing partial block is discarded.
    """
    block_f = input_rate_hz * resolution_s
    block = int(round(block_f))
    if block < 1 or abs(block_f - block) > 1e-9:
        raise ValueError(f"input_rate * resolution must be a positive integer, got {block_f}")
    n_blocks = len(series) // block
    out = []
    for b in range(n_blocks):
        chunk = series[b * block : (b + 1) * block]
        mean = to_matrix(chunk).mean(axis=0)
        out.append(ChannelVector(timestamp=chunk[0].timestamp, values=mean))
    return out


def channel_sigmas(series: Sequence[ChannelVector]) -> np.ndarray:
    """Per-channel population standard deviation, the unit for anomaly magnitudes."""
    return to_matrix(series).std(axis=0)


def inject_anomaly(
    series: Sequence[ChannelVector],
    class_id: str,
    start: int,
    magnitude: float,
    duration: int = 1,
    channel: int = 0,
    sigma: float | None = None,
    osc_cycles: float = 4.0,
    osc_decay: float = 3.0,
) -> list[ChannelVector]:
    """Return a copy of the series with one synthetic anomaly added.

    Magnitudes are expressed in ambient channel standard deviations (measured
    from the input series unless `sigma` is given), start/duration in samples
    at the series' own rate.  Shapes:

    - spike: additive pulse of `duration` samples (pass one block's worth)
    - drop: negative offset held for `duration` samples, then restored
    - step: permanent offset from `start` onward (tap-change shape)
    - oscillatory: additive damped sinusoid over `duration` samples

    Only `channel` is touched.
    """
    if class_id not in ANOMALY_CLASSES:
        raise ValueError(f"unknown anomaly class {class_id!r}, expected one of {ANOMALY_CLASSES}")
    n = len(series)
    duration = max(1, int(duration))
    if not 0 <= start < n:
        raise ValueError(f"start index {start} outside series of length {n}")
    if class_id != "step" and start + duration > n:
        raise ValueError(f"event [{start}, {start + duration}) exceeds series length {n}")
    if sigma is None:
        sigma = float(channel_sigmas(series)[channel])
    values = to_matrix(series).copy()
    amp = magnitude * sigma
    if class_id == "spike":
        values[start : start + duration, channel] += amp
    elif class_id == "drop":
        values[start : start + duration, channel] -= abs(amp)
    elif class_id == "step":
        values[start:, channel] += amp
    else:  # oscillatory
        t = np.arange(duration, dtype=float)
        wave = np.exp(-osc_decay * t / duration) * np.sin(2.0 * np.pi * osc_cycles * t / duration)
        values[start : start + duration, channel] += amp * wave
    return to_vectors(values, [cv.timestamp for cv in series])


# -- synthetic scenarios ----------------------------------------------------

DEFAULT_START_TIME = datetime(2021, 6, 1, 0, 0, 0, tzinfo=timezone.utc)

# Channel scales and operating point for the built-in ambient model: noise
# sigmas of roughly 18 V, 1.2 A, 1.5e-3 (dimensionless), 1.2 mHz around a
# 161 kV / 520 A / 60 Hz operating point.
_AMBIENT_MEAN = np.array([161000.0, 520.0, 0.31, 60.0])
_AMBIENT_NOISE_SCALE = np.array([18.0, 1.2, 0.0015, 0.0012])

_AMBIENT_A = np.array(
    [
        [0.90, 0.02, 0.01, 0.03],
        [0.03, 0.85, 0.08, 0.00],
        [0.01, 0.07, 0.86, 0.01],
        [0.02, 0.00, 0.01, 0.93],
    ]
)
_AMBIENT_CORR = np.array(
    [
        [1.00, 0.10, 0.10, 0.40],
        [0.10, 1.00, 0.50, 0.05],
        [0.10, 0.50, 1.00, 0.05],
        [0.40, 0.05, 0.05, 1.00],
    ]
)


def default_ambient_model() -> VarModel:
    """A stable VAR(1) in physical units used when a scenario file does not
    supply its own ground truth.  Built by conjugating a unit-scale model with
    the channel noise scales, so correlations carry over unchanged."""
    S = np.diag(_AMBIENT_NOISE_SCALE)
    S_inv = np.diag(1.0 / _AMBIENT_NOISE_SCALE)
    A = S @ _AMBIENT_A @ S_inv
    sigma = S @ _AMBIENT_CORR @ S
    c = (np.eye(K) - A) @ _AMBIENT_MEAN
    return VarModel(c=c, coefs=A[None, :, :], sigma=sigma)


@dataclass(frozen=True)
class ScenarioEvent:
    class_id: str
    start_s: float
    magnitude_sigma: float
    duration_s: float

    def __post_init__(self):
        if self.class_id not in ANOMALY_CLASSES:
            raise ValueError(f"unknown anomaly class {self.class_id!r}")


@dataclass(frozen=True)
class SyntheticScenario:
    """Ground-truth recipe for a synthetic PMU stream."""

    ambient_model: VarModel
    duration_s: float
    sample_rate_hz: float = 30.0
    seed: int = 0
    events: tuple[ScenarioEvent, ...] = ()
    start_time: datetime = DEFAULT_START_TIME

    def __post_init__(self):
        if not self.ambient_model.is_stable(tol=0.0):
            raise ValueError("ambient model must be stable (companion spectral radius < 1)")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("duration and sample rate must be positive")
        for ev in self.events:
            if ev.start_s + ev.duration_s > self.duration_s:
                raise ValueError(f"event at {ev.start_s}s exceeds scenario duration")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


def read_kv_file(text: str) -> list[tuple[str, str]]:
    """Parse a `key = value` configuration body; `#` starts a comment.
    Repeated keys are preserved in order."""
    pairs = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        pairs.append((key.strip(), value.strip()))
    return pairs


def parse_scenario(text: str, ambient_model: VarModel | None = None) -> SyntheticScenario:
    """Build a scenario from its key-value file body.

    Documented keys: duration_s, rate_hz, seed, start_time (ISO-8601) and
    repeated `event = class,start_s,magnitude_sigma,duration_s` lines.
    """
    pairs = read_kv_file(text)
    fields: dict[str, str] = {}
    events: list[ScenarioEvent] = []
    for key, value in pairs:
        if key == "event":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 4:
                raise ValueError(f"event needs class,start_s,magnitude_sigma,duration_s, got {value!r}")
            events.append(
                ScenarioEvent(
                    class_id=parts[0],
                    start_s=float(parts[1]),
                    magnitude_sigma=float(parts[2]),
                    duration_s=float(parts[3]),
                )
            )
        else:
            fields[key] = value
    return SyntheticScenario(
        ambient_model=ambient_model or default_ambient_model(),
        duration_s=float(fields["duration_s"]),
        sample_rate_hz=float(fields.get("rate_hz", 30.0)),
        seed=int(fields.get("seed", 0)),
        events=tuple(events),
        start_time=_parse_timestamp(fields["start_time"]) if "start_time" in fields else DEFAULT_START_TIME,
    )


def synthesize_ambient(scenario: SyntheticScenario, seed: int | None = None) -> list[ChannelVector]:
    """Simulate the scenario's ambient process (no events injected).

    Deterministic for a given seed; defaults to the scenario's own seed.
    """
    n = scenario.n_samples
    values = simulate(scenario.ambient_model, n, seed=scenario.seed if seed is None else seed)
    dt = timedelta(seconds=1.0 / scenario.sample_rate_hz)
    timestamps = [scenario.start_time + i * dt for i in range(n)]
    return to_vectors(values, timestamps)


def synthesize_scenario(scenario: SyntheticScenario, seed: int | None = None) -> list[ChannelVector]:
    """Ambient stream with every scenario event injected (voltage channel).

    Oscillatory events get one cycle per two seconds so the waveform survives
    block-averaging down to a 0.5 s model resolution.
    """
    series = synthesize_ambient(scenario, seed=seed)
    sigmas = channel_sigmas(series)
    rate = scenario.sample_rate_hz
    for ev in scenario.events:
        extra = {}
        if ev.class_id == "oscillatory":
            extra["osc_cycles"] = max(1.0, ev.duration_s / 2.0)
            extra["osc_decay"] = 1.0
        series = inject_anomaly(
            series,
            ev.class_id,
            start=int(round(ev.start_s * rate)),
            magnitude=ev.magnitude_sigma,
            duration=max(1, int(round(ev.duration_s * rate))),
            channel=0,
            sigma=float(sigmas[0]),
            **extra,
        )
    return series


def correlation_matrix(series: Sequence[ChannelVector]) -> np.ndarray:
    """Pearson correlation of the four modeling channels over the series."""
    return np.corrcoef(to_matrix(series), rowvar=False)
