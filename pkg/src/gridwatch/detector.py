"""Probabilistic residual scoring and the streaming detection state machine.

Residuals of the one-step prediction are scored two ways against the model's
noise covariance: the multivariate Mahalanobis distance

    D_M(r) = sqrt(r' Sigma^{-1} r)

and, per channel, the deviation from the Gaussian conditional distribution of
that channel given the other channels,

    score_k = |r_k - mu_k| / sd_k,
    mu_k  = Sigma[k, rest] Sigma[rest, rest]^{-1} r[rest],
    sd_k  = sqrt(Sigma[k, k] - Sigma[k, rest] Sigma[rest, rest]^{-1} Sigma[rest, k]).

Both are unitless ("standard deviations"), so thresholds transfer across
streams and operating conditions.  The detector compares the maximum of the
scores against a single operator threshold T; while an anomaly is open, the
model is frozen and incoming points are scored against its pre-computed
multi-step forecast trajectory.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from gridwatch.varmodel import VarModel, forecast_q, predict_one, regularize_spd

TRIGGER_NAMES = ("multivariate", "V", "I", "sin_diff", "F")

# Sliding-window range thresholds for the univariate min-max baseline,
# in units of the full-history standard deviation.
DEFAULT_MINMAX_THRESHOLDS = {"V": 3.0, "I": 4.0, "sin_diff": 4.0, "F": 6.0}

# Threshold presets for offline co-occurrence surveys: a permissive sweep
# that catches low-probability deviations and a strict one that keeps only
# severe events.  Live detection defaults to T=12 (see PipelineConfig).
REPORT_THRESHOLD_PRESETS = (5.0, 15.0)

MINMAX_WINDOW_SECONDS = 10.0


class ScoringNumericsError(np.linalg.LinAlgError):
    """Covariance not usable for scoring even after regularization."""


class ResidualScorer:
    """Precomputed scoring machinery for one noise covariance.

    The covariance is regularized (small multiple of the average variance on
    the diagonal) before factorization; conditional weights and variances are
    cached per channel so scoring a point is a handful of dot products.
    """

    def __init__(self, sigma: np.ndarray):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"sigma must be square, got {sigma.shape}")
        self.sigma = regularize_spd(sigma)
        self.K = sigma.shape[0]
        try:
            self._chol = np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError as exc:
            raise ScoringNumericsError(f"covariance not SPD after regularization: {exc}") from exc
        self._precision = np.linalg.inv(self.sigma)
        weights = np.zeros((self.K, self.K - 1))
        cond_sd = np.zeros(self.K)
        for k in range(self.K):
            rest = [j for j in range(self.K) if j != k]
            s_rr = self.sigma[np.ix_(rest, rest)]
            s_kr = self.sigma[k, rest]
            w = np.linalg.solve(s_rr, s_kr)
            var = self.sigma[k, k] - s_kr @ w
            if var <= 0:
                raise ScoringNumericsError(f"non-positive conditional variance for channel {k}")
            weights[k] = w
            cond_sd[k] = np.sqrt(var)
        self._cond_weights = weights
        self._cond_sd = cond_sd
        self._rest_idx = [[j for j in range(self.K) if j != k] for k in range(self.K)]

    def mahalanobis(self, r: np.ndarray) -> float:
        r = np.asarray(r, dtype=float)
        return float(np.sqrt(max(0.0, r @ self._precision @ r)))

    def mahalanobis_batch(self, residuals: np.ndarray) -> np.ndarray:
        R = np.asarray(residuals, dtype=float)
        sq = np.einsum("ni,ij,nj->n", R, self._precision, R)
        return np.sqrt(np.clip(sq, 0.0, None))

    def conditional(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.empty(self.K)
        for k in range(self.K):
            mu = self._cond_weights[k] @ r[self._rest_idx[k]]
            out[k] = abs(r[k] - mu) / self._cond_sd[k]
        return out

    def conditional_batch(self, residuals: np.ndarray) -> np.ndarray:
        R = np.asarray(residuals, dtype=float)
        out = np.empty_like(R)
        for k in range(self.K):
            mu = R[:, self._rest_idx[k]] @ self._cond_weights[k]
            out[:, k] = np.abs(R[:, k] - mu) / self._cond_sd[k]
        return out


def mahalanobis_score(residual: np.ndarray, sigma: np.ndarray) -> float:
    """sqrt(r' Sigma^{-1} r) with the covariance regularized before inversion."""
    return ResidualScorer(sigma).mahalanobis(residual)


def conditional_scores(residual: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Per-channel conditional deviation scores (see module docstring)."""
    return ResidualScorer(sigma).conditional(residual)


@dataclass(frozen=True)
class ResidualScore:
    """Scores of one residual vector."""

    timestamp: object
    residual: np.ndarray
    mahalanobis: float
    conditional: np.ndarray

    @property
    def peak(self) -> float:
        return max(self.mahalanobis, float(np.max(self.conditional)))

    def to_record(self) -> dict:
        return {
            "timestamp": self.timestamp.isoformat() if hasattr(self.timestamp, "isoformat") else self.timestamp,
            "mahalanobis": float(self.mahalanobis),
            "cond_V": float(self.conditional[0]),
            "cond_I": float(self.conditional[1]),
            "cond_sin": float(self.conditional[2]),
            "cond_F": float(self.conditional[3]),
        }


@dataclass
class AnomalyEvent:
    """One detected event and everything an operator needs to review it."""

    event_id: int
    start_timestamp: object
    trigger_set: frozenset
    threshold: float
    score_window: tuple = ()
    raw_window: np.ndarray | None = None
    end_timestamp: object = None
    returned: bool = True
    class_label: str | None = None
    label_source: str | None = None
    feature_channel: str | None = None
    features: object = None
    decision_path: list | None = None


@dataclass
class StepResult:
    """What one detector tick produced.

    `appended` lists the standardized vectors pushed into the training buffer
    this tick (with an imputed flag), so a caller holding a parallel
    physical-unit window can mirror them.
    """

    score: ResidualScore
    opened: AnomalyEvent | None = None
    closed: AnomalyEvent | None = None
    appended: list = field(default_factory=list)


class Detector:
    """Single-writer detection state machine over a standardized stream.

    In NORMAL mode each point is scored against the one-step prediction; a
    score above the threshold opens an event, freezes the model, and switches
    to scoring the next `q` points against the frozen forecast trajectory.
    On close, points flagged above the threshold are imputed into the buffer
    as their forecasts when the scores returned below the threshold; if they
    never returned (a persistent level shift) the observed data is kept so
    the model can adapt to the new operating point.
    """

    NORMAL = "NORMAL"
    ANOMALY = "ANOMALY"

    def __init__(
        self,
        model: VarModel,
        buffer: np.ndarray,
        threshold: float,
        q: int = 10,
        feature_window: int = 10,
        start_event_id: int = 1,
    ):
        buffer = np.asarray(buffer, dtype=float)
        if buffer.ndim != 2 or buffer.shape[0] < model.p:
            raise ValueError("training buffer must be (n, K) with n >= lag order")
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        if q < 1:
            raise ValueError("q must be >= 1")
        self.window = buffer.shape[0]
        self.q = q
        self.feature_window = feature_window
        self.threshold = float(threshold)
        self.mode = self.NORMAL
        self.model_stale = False
        self._next_event_id = start_event_id
        self._buffer = deque(buffer, maxlen=self.window)
        self._set_model(model)
        # ANOMALY-mode bookkeeping
        self._countdown = 0
        self._trajectory = None
        self._event: AnomalyEvent | None = None
        self._pending: list = []
        self._event_scores: list = []

    def _set_model(self, model: VarModel):
        self.model = model
        self.scorer = ResidualScorer(model.sigma)

    def refresh(self, model: VarModel, buffer: np.ndarray):
        """Swap in a freshly fitted model and its standardized window.

        Must be called between ticks (single-writer contract); readers of
        `model`/`scorer` only ever observe complete instances.
        """
        if self.mode != self.NORMAL:
            raise RuntimeError("cannot refresh the model while an anomaly is open")
        buffer = np.asarray(buffer, dtype=float)
        self._buffer = deque(buffer, maxlen=self.window)
        self._set_model(model)
        self.model_stale = False

    def set_threshold(self, value: float):
        if value <= 0:
            raise ValueError("threshold must be positive")
        self.threshold = float(value)

    def _lags(self) -> np.ndarray:
        p = self.model.p
        return np.stack([self._buffer[-p + i] for i in range(p)]) if p > 1 else np.asarray(self._buffer[-1])[None, :]

    def _score(self, prediction: np.ndarray, observed: np.ndarray, timestamp) -> ResidualScore:
        r = prediction - observed
        return ResidualScore(
            timestamp=timestamp,
            residual=r,
            mahalanobis=self.scorer.mahalanobis(r),
            conditional=self.scorer.conditional(r),
        )

    def step(self, observed: np.ndarray, timestamp=None) -> StepResult:
        """Advance the state machine by one standardized observation."""
        observed = np.asarray(observed, dtype=float)
        if observed.shape != (self.model.K,):
            raise ValueError(f"observed must have shape ({self.model.K},)")
        if self.mode == self.NORMAL:
            return self._step_normal(observed, timestamp)
        return self._step_anomaly(observed, timestamp)

    def _step_normal(self, observed: np.ndarray, timestamp) -> StepResult:
        lags = self._lags()
        score = self._score(predict_one(self.model, lags), observed, timestamp)
        if score.peak > self.threshold:
            trigger = {"multivariate"} if score.mahalanobis > self.threshold else set()
            for k, name in enumerate(("V", "I", "sin_diff", "F")):
                if score.conditional[k] > self.threshold:
                    trigger.add(name)
            self._event = AnomalyEvent(
                event_id=self._next_event_id,
                start_timestamp=timestamp,
                trigger_set=frozenset(trigger),
                threshold=self.threshold,
            )
            self._next_event_id += 1
            self.mode = self.ANOMALY
            self._countdown = self.q
            self._trajectory = forecast_q(self.model, lags, self.q + 1)
            self._event_scores = [score]
            self._pending = [(observed, self._trajectory[0], True)]
            return StepResult(score=score, opened=self._event)
        self._buffer.append(observed)
        self.model_stale = True
        return StepResult(score=score, appended=[(observed, False)])

    def _step_anomaly(self, observed: np.ndarray, timestamp) -> StepResult:
        j = self.q - self._countdown + 1
        forecast = self._trajectory[j]
        score = self._score(forecast, observed, timestamp)
        self._event_scores.append(score)
        self._pending.append((observed, forecast, score.peak > self.threshold))
        self._countdown -= 1
        if self._countdown > 0:
            return StepResult(score=score)
        return self._close_event(score, timestamp)

    def _close_event(self, last_score: ResidualScore, timestamp) -> StepResult:
        event = self._event
        event.returned = last_score.peak <= self.threshold
        event.end_timestamp = timestamp
        event.score_window = tuple(self._event_scores[: self.feature_window])
        appended = []
        for obs, forecast, flagged in self._pending:
            impute = flagged and event.returned
            value = forecast if impute else obs
            self._buffer.append(value)
            appended.append((value, impute))
        self.mode = self.NORMAL
        self.model_stale = True
        self._event = None
        self._trajectory = None
        self._pending = []
        self._event_scores = []
        return StepResult(score=last_score, closed=event, appended=appended)


def event_feature_scores(event: AnomalyEvent) -> tuple:
    """Pick the score sequence features are computed on: the multivariate
    score when it fired, otherwise the triggering channel's conditional score.
    Returns (sequence name, 1-D score array over the feature window)."""
    if "multivariate" in event.trigger_set:
        return "multivariate", np.array([s.mahalanobis for s in event.score_window])
    for k, name in enumerate(("V", "I", "sin_diff", "F")):
        if name in event.trigger_set:
            return name, np.array([s.conditional[k] for s in event.score_window])
    raise ValueError("event has an empty trigger set")


def minmax_detect(window: Sequence[float], sigma_full: float, k_threshold: float) -> bool:
    """Univariate sliding-window baseline: flag when the window range
    (max - min) strictly exceeds k times the full-history standard deviation."""
    window = np.asarray(window, dtype=float)
    if window.size == 0:
        raise ValueError("window must not be empty")
    return bool(window.max() - window.min() > k_threshold * sigma_full)


def minmax_scan(
    values: np.ndarray, sigmas: np.ndarray, window_points: int = 20, thresholds: dict | None = None
) -> np.ndarray:
    """Run the min-max baseline per channel over a whole series.

    The default window is MINMAX_WINDOW_SECONDS at the 0.5 s model resolution.
    Returns an (n, K) boolean array; entry [t, k] flags the window ending at t.
    """
    thresholds = thresholds or DEFAULT_MINMAX_THRESHOLDS
    values = np.asarray(values, dtype=float)
    n, k_dim = values.shape
    names = list(DEFAULT_MINMAX_THRESHOLDS)
    flags = np.zeros((n, k_dim), dtype=bool)
    for t in range(window_points - 1, n):
        win = values[t - window_points + 1 : t + 1]
        rng = win.max(axis=0) - win.min(axis=0)
        for k in range(k_dim):
            flags[t, k] = rng[k] > thresholds[names[k]] * sigmas[k]
    return flags


def cooccurrence_counts(events: Iterable[AnomalyEvent]) -> Counter:
    """Partition events by their exact trigger set."""
    return Counter(ev.trigger_set for ev in events)


def survey_trigger_sets(mahalanobis: np.ndarray, conditional: np.ndarray, threshold: float) -> Counter:
    """Offline co-occurrence survey over a scored stream.

    Partitions every tick where anything exceeded the threshold by the exact
    set of score channels that fired, as one would sweep a recorded stream at
    the `REPORT_THRESHOLD_PRESETS`.
    """
    mahalanobis = np.asarray(mahalanobis, dtype=float)
    conditional = np.asarray(conditional, dtype=float)
    counts: Counter = Counter()
    channel_names = ("V", "I", "sin_diff", "F")
    fired = (mahalanobis > threshold) | np.any(conditional > threshold, axis=1)
    for i in np.nonzero(fired)[0]:
        trigger = set()
        if mahalanobis[i] > threshold:
            trigger.add("multivariate")
        for k, name in enumerate(channel_names):
            if conditional[i, k] > threshold:
                trigger.add(name)
        counts[frozenset(trigger)] += 1
    return counts


def format_cooccurrence(counts: Counter) -> str:
    """Plain-text co-occurrence table, most frequent trigger set first."""
    order = sorted(counts.items(), key=lambda kv: (-kv[1], sorted(kv[0])))
    lines = ["count  trigger_set"]
    for trigger_set, count in order:
        lines.append(f"{count:5d}  {{{', '.join(sorted(trigger_set))}}}")
    return "\n".join(lines)
