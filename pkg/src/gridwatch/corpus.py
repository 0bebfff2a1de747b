"""Synthetic labeled event corpus for training and evaluating the classifier.

Each corpus row is produced the same way a live event would be: a fresh
ambient stretch is simulated, one anomaly of a known class is injected with
randomized magnitude and shape parameters, the stream runs through the
detection state machine, and the features of the resulting score window are
extracted.  Rows where the injection failed to trigger are skipped (rare at
the default settings), so the labels are exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gridwatch.detector import Detector, event_feature_scores
from gridwatch.features import FeatureVector, extract_features
from gridwatch.ingest import ANOMALY_CLASSES, default_ambient_model, inject_anomaly, to_vectors
from gridwatch.preprocess import fit_standardization, standardize
from gridwatch.varmodel import VarModel, fit_var, simulate

from datetime import datetime, timedelta, timezone

_T0 = datetime(2021, 6, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class CorpusConfig:
    n_events: int = 750
    threshold: float = 5.0
    q: int = 10
    feature_window: int = 10
    window: int = 1200
    lead: int = 3
    magnitude_range: tuple = (5.0, 50.0)
    seed: int = 0
    classes: tuple = ANOMALY_CLASSES


def _random_event(class_id: str, rng: np.random.Generator, config: CorpusConfig) -> dict:
    magnitude = float(rng.uniform(*config.magnitude_range))
    if class_id == "spike":
        return {"magnitude": magnitude * float(rng.choice([-1.0, 1.0])), "duration": 1}
    if class_id == "drop":
        return {"magnitude": magnitude, "duration": int(rng.integers(2, 9))}
    if class_id == "step":
        return {"magnitude": magnitude * float(rng.choice([-1.0, 1.0])), "duration": 1}
    return {
        "magnitude": magnitude,
        "duration": int(rng.integers(6, 11)),
        "osc_cycles": float(rng.uniform(2.0, 4.0)),
        "osc_decay": float(rng.uniform(1.0, 3.0)),
    }


def build_event_window(
    model: VarModel,
    class_id: str,
    event_seed,
    config: CorpusConfig = CorpusConfig(),
) -> tuple[FeatureVector, dict] | None:
    """Simulate one ambient stretch, inject one event, run the detector.

    Returns (features, details) for the first event the detector closed, or
    None if the injection never crossed the threshold.
    """
    rng = np.random.default_rng(event_seed)
    shape = _random_event(class_id, rng, config)
    n = config.window + config.lead + config.q + 2
    values = simulate(model, n, seed=rng.integers(0, 2**63 - 1))
    dt = timedelta(seconds=0.5)
    series = to_vectors(values, [_T0 + i * dt for i in range(n)])
    inject_at = config.window + config.lead
    series = inject_anomaly(series, class_id, start=inject_at, channel=0, **shape)

    window = np.stack([cv.values for cv in series[: config.window]])
    params = fit_standardization(window)
    z_window = standardize(window, params)
    var = fit_var(z_window, 1)
    detector = Detector(
        var, z_window, threshold=config.threshold, q=config.q, feature_window=config.feature_window
    )
    for t in range(config.window, n):
        z = standardize(series[t].values, params, start_index=t)[0]
        result = detector.step(z, series[t].timestamp)
        if result.closed is not None:
            event = result.closed
            channel, scores = event_feature_scores(event)
            features = extract_features(scores, config.threshold)
            return features, {"event": event, "channel": channel, "shape": shape}
    return None


def build_corpus(config: CorpusConfig = CorpusConfig()):
    """Build the labeled corpus; returns (labels, X, feature_vectors).

    Deterministic for a given config.  Classes are interleaved so every
    class receives n_events / len(classes) rows (up to rounding).
    """
    model = default_ambient_model()
    labels, rows, fvs = [], [], []
    i = 0
    attempts = 0
    while len(labels) < config.n_events:
        class_id = config.classes[i % len(config.classes)]
        built = build_event_window(model, class_id, event_seed=[config.seed, attempts], config=config)
        attempts += 1
        if built is None:
            continue
        fv, _ = built
        labels.append(class_id)
        rows.append(fv.as_array())
        fvs.append(fv)
        i += 1
        if attempts > 4 * config.n_events:
            raise RuntimeError("too many injections failed to trigger; check thresholds")
    return labels, np.stack(rows), fvs
