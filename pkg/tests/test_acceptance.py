"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`).

Every expected value is either computed by an independent oracle inside this
module or is a pinned tolerance; nothing is calibrated after the fact.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from conftest import random_spd, rotation_block
from gridwatch import ingest
from gridwatch.corpus import CorpusConfig, build_corpus
from gridwatch.detector import Detector, ResidualScorer
from gridwatch.hyperlab import lag_depth_experiment, retrain_error_experiment
from gridwatch.pipeline import Pipeline, PipelineConfig
from gridwatch.preprocess import fit_standardization, standardize
from gridwatch.tree import TrainConfig, cross_validate, train_tree
from gridwatch.varmodel import VarModel, fit_var, random_stable_var, simulate


def report(name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def chi4_tail(t):
    """P(chi_4 > t) by quadrature over the chi density with 4 dof."""
    val, _ = integrate.quad(lambda x: 0.5 * x**3 * np.exp(-0.5 * x * x), t, np.inf)
    return val


@pytest.fixture(scope="module")
def ambient_base():
    """One long synthetic ambient source shared by the tau/lag experiments."""
    src = random_stable_var(4, 1, np.random.default_rng(2024))
    return simulate(src, 2 * 4 * 3600, seed=5)  # 4 hours at 0.5 s


def test_exact_recovery_oracle():
    started = time.perf_counter()
    A = np.zeros((4, 4))
    A[:2, :2] = rotation_block(0.98, 0.7)
    A[2:, 2:] = rotation_block(0.95, 1.3)
    A[0, 2] = 0.05
    A[3, 1] = -0.04
    c = np.array([0.3, -0.2, 0.1, 0.4])
    truth = VarModel(c=c, coefs=A[None], sigma=np.eye(4))
    data = np.empty((100, 4))
    data[0] = truth.stationary_mean() + np.array([1.0, 0.0, 1.0, 0.0])
    for t in range(1, 100):
        data[t] = c + A @ data[t - 1]
    fit = fit_var(data, 1)
    err_a = float(np.max(np.abs(fit.coefs[0] - A)))
    err_c = float(np.max(np.abs(fit.c - c)))
    elapsed = time.perf_counter() - started
    report(
        "exact recovery (100 noiseless points)",
        err_a < 1e-8 and err_c < 1e-8 and elapsed < 1.0,
        f"max|A err|={err_a:.2e}, max|c err|={err_c:.2e}, {elapsed:.2f}s",
    )


def test_retraining_error_curve(ambient_base):
    started = time.perf_counter()
    grid = [0.5, 2.0, 8.0, 10.0]
    rep = retrain_error_experiment(ambient_base, grid, replicates=50, seed=7)
    meds = rep.medians()
    violations = [
        (a - b) / a for a, b in zip(meds[:-1], meds[1:]) if b >= a
    ]  # adjacent increases, as a fraction of the left median
    ok_order = len(violations) == 0 or (len(violations) == 1 and abs(violations[0]) <= 0.10)
    ok_level = meds[-1] <= 0.02
    elapsed = time.perf_counter() - started
    report(
        "retraining-error curve",
        ok_order and ok_level and elapsed < 300,
        f"medians={[round(m, 5) for m in meds]}, tau=10min median={meds[-1]:.4f} (<=0.02), {elapsed:.1f}s",
    )


def test_lag_depth_ordering(ambient_base):
    started = time.perf_counter()
    rep = lag_depth_experiment(ambient_base, [(1, 10.0), (2, 20.0)], replicates=50, seed=11)
    m1, m2 = rep.medians()
    elapsed = time.perf_counter() - started
    report(
        "lag-depth ordering",
        m2 > m1 and elapsed < 600,
        f"VAR(1)@10min={m1:.5f} < VAR(2)@20min={m2:.5f}, {elapsed:.1f}s",
    )


def test_false_alarm_calibration():
    started = time.perf_counter()
    # the detector's own model: fitted on synthetic ambient data, then used
    # both to generate the stream and to score it
    src = random_stable_var(4, 1, np.random.default_rng(31))
    model = fit_var(simulate(src, 1200, seed=32), 1)
    n = 1_200_000
    stream = simulate(model, n + 1, seed=33)
    predictions = model.c + stream[:-1] @ model.coefs[0].T
    residuals = predictions - stream[1:]
    scorer = ResidualScorer(model.sigma)
    scores = scorer.mahalanobis_batch(residuals)
    details = []
    ok = True
    for t in (3.0, 4.0, 5.0):
        empirical = float(np.mean(scores > t))
        expected = chi4_tail(t)
        ratio = empirical / expected
        ok = ok and (0.5 < ratio < 2.0)
        details.append(f"T={t:g}: emp={empirical:.2e} chi4={expected:.2e} ratio={ratio:.2f}")
    elapsed = time.perf_counter() - started
    report(
        "false-alarm calibration (1.2e6 ticks)",
        ok and elapsed < 600,
        "; ".join(details) + f", {elapsed:.1f}s",
    )


def test_conditional_score_oracle():
    def oracle(sigma, r):
        # Gaussian conditioning through the full precision matrix
        P = np.linalg.inv(sigma)
        Pr = P @ r
        mu = r - Pr / np.diag(P)
        sd = np.sqrt(1.0 / np.diag(P))
        return np.abs(r - mu) / sd

    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        sigma = random_spd(rng)
        r = rng.normal(size=4) * 3.0
        scorer = ResidualScorer(sigma)
        got = scorer.conditional(r)
        want = oracle(scorer.sigma, r)
        worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-9))))
    report("conditional-score oracle (1000 cases)", worst < 1e-6, f"worst relative deviation={worst:.2e}")


def _fifty_event_scenario(tmp_path):
    # events are spaced past the training window so a permanent step's edge
    # has left the window (and the refit sigma has settled) before the next
    # injection arrives; a step inside the window inflates the de-trended
    # sigma and would desensitize everything after it
    rng = np.random.default_rng(77)
    classes = ["spike", "drop", "step", "oscillatory"]
    spacing = 150.0
    first = 300.0
    lines = [f"duration_s = {first + 50 * spacing + 60}", "rate_hz = 30", "seed = 9"]
    injections = []
    for i in range(50):
        cls = classes[i % 4]
        start = first + spacing * i
        magnitude = float(rng.uniform(15.0, 40.0))
        if cls == "spike":
            duration = 0.5
        elif cls == "drop":
            duration = float(rng.uniform(1.0, 3.0))
        elif cls == "step":
            duration = 1.0
            magnitude *= float(rng.choice([-1.0, 1.0]))
        else:
            duration = 4.0
        lines.append(f"event = {cls},{start},{magnitude},{duration}")
        injections.append((cls, start))
    path = tmp_path / "recall.conf"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path, injections


def test_end_to_end_detection(tmp_path):
    started = time.perf_counter()
    scenario_path, injections = _fifty_event_scenario(tmp_path)
    labels, X, _ = build_corpus(CorpusConfig(n_events=120, seed=0, threshold=12.0, magnitude_range=(12.0, 50.0)))
    tree = train_tree(X, labels)
    config = PipelineConfig(
        scenario=str(scenario_path),
        tau_minutes=2.0,
        threshold_t=12.0,
        persist_dir=str(tmp_path / "data"),
    )
    pipeline = Pipeline(config, classifier=tree)
    pipeline.run()
    events = pipeline.store.events_since(0)
    t0 = ingest.DEFAULT_START_TIME
    from datetime import datetime

    event_times = [(datetime.fromisoformat(e["start"]) - t0).total_seconds() for e in events]
    detected = 0
    for _, start in injections:
        if any(start - 1.0 <= et <= start + 8.0 for et in event_times):
            detected += 1
    recall = detected / len(injections)
    false_events = [
        et for et in event_times if not any(start - 1.0 <= et <= start + 15.0 for _, start in injections)
    ]
    # calibration bound: scored ticks * chi4 tail at T=12, within factor 2
    scored_ticks = pipeline.ticks - config.window_points
    allowed = max(2.0 * scored_ticks * chi4_tail(12.0), 0.0)
    elapsed = time.perf_counter() - started
    report(
        "end-to-end detection (50 events >= 15 sigma)",
        recall >= 0.95 and len(false_events) <= allowed and elapsed < 120,
        f"recall={recall:.3f}, false events={len(false_events)} (allowed {allowed:.2e}), {elapsed:.1f}s",
    )


def test_classification_synthetic_corpus():
    started = time.perf_counter()
    labels, X, _ = build_corpus(CorpusConfig(n_events=750, seed=3))
    mean, folds, confusion = cross_validate(X, labels, folds=10, config=TrainConfig(), seed=1)
    elapsed = time.perf_counter() - started
    report(
        "classification 10-fold CV on 750 synthetic events",
        mean >= 0.90 and elapsed < 60,
        f"accuracy={mean:.4f} (>=0.90), folds={[round(f, 3) for f in folds]}, {elapsed:.1f}s",
    )


def test_real_time_budget():
    src = random_stable_var(4, 1, np.random.default_rng(55))
    stream = simulate(src, 1300, seed=56)
    window = stream[:1200]
    durations = []
    for i in range(50):
        tick = stream[1200 + (i % 100)]
        t0 = time.perf_counter()
        params = fit_standardization(window)
        z_window = standardize(window, params)
        model = fit_var(z_window, 1)
        detector = Detector(model, z_window, threshold=12.0)
        z = standardize(tick, params, start_index=1200)[0]
        detector.step(z)
        durations.append(time.perf_counter() - t0)
    median_ms = 1000.0 * float(np.median(durations))
    report(
        "real-time budget (refit 1200x4 + scoring per tick)",
        median_ms < 50.0,
        f"median tick={median_ms:.2f} ms (< 50 ms, 10x headroom under the 0.5 s cadence)",
    )


def test_determinism_reports_and_logs(tmp_path):
    rep_a = retrain_error_experiment(None, [0.5, 1.0], replicates=5, seed=13).to_csv()
    rep_b = retrain_error_experiment(None, [0.5, 1.0], replicates=5, seed=13).to_csv()
    scenario = tmp_path / "det.conf"
    scenario.write_text(
        "duration_s = 300\nrate_hz = 30\nseed = 9\nevent = spike,100,15,0.5\nevent = drop,200,12,2\n",
        encoding="utf-8",
    )
    labels, X, _ = build_corpus(CorpusConfig(n_events=40, seed=0, threshold=12.0, magnitude_range=(12.0, 50.0)))
    tree = train_tree(X, labels)
    logs = []
    for name in ("a", "b"):
        config = PipelineConfig(
            scenario=str(scenario),
            tau_minutes=1.0,
            threshold_t=12.0,
            persist_dir=str(tmp_path / name),
        )
        pipeline = Pipeline(config, classifier=tree)
        pipeline.run()
        pipeline.close()
        logs.append((Path(config.persist_dir) / "events.log").read_bytes())
    ok = rep_a == rep_b and logs[0] == logs[1] and len(logs[0]) > 0
    report(
        "determinism (byte-identical reports and event logs)",
        ok,
        f"report bytes={len(rep_a)}, log bytes={len(logs[0])}",
    )
