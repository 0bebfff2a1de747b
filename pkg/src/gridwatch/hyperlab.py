"""Data-driven hyperparameter selection experiments.

Three experiments guide the choice of training-window length tau and lag
order p:

- retraining error: fit a model, treat it as ground truth, simulate the same
  amount of data, refit, and measure the average absolute per-element
  coefficient difference (D1).  Shows how much data a given tau recovers.
- model drift: fit consecutive disjoint windows of real data and measure the
  same distance between them (D2).  Shows how fast the effective model moves.
- lag depth: the retraining-error protocol per (p, tau) pair, with the
  distance averaged over all lag matrices.

The operator reads the two error curves against each other: tau should be
large enough that the retraining error has flattened, but small enough that
drift has not taken over.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from gridwatch.varmodel import VarModel, fit_var, random_stable_var, simulate

DEFAULT_RESOLUTION_S = 0.5


def matrix_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Average absolute per-element difference of two coefficient stacks.

    Accepts (K, K) matrices or (p, K, K) stacks; multi-lag models are scored
    by the mean over their lag matrices.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class ExperimentReport:
    """Distributions of one metric over a grid of (tau, p) settings."""

    metric: str
    tau_minutes: tuple
    lag_orders: tuple
    values: tuple
    replicate_count: int | None
    seed: int | None

    def __post_init__(self):
        if not (len(self.tau_minutes) == len(self.lag_orders) == len(self.values)):
            raise ValueError("tau_minutes, lag_orders and values must be parallel")
        for dist in self.values:
            if self.replicate_count is not None and len(dist) != self.replicate_count:
                raise ValueError("every distribution must hold replicate_count entries")
            if any(v < 0 for v in dist):
                raise ValueError("metric values must be non-negative")

    def medians(self) -> list:
        return [float(np.median(dist)) for dist in self.values]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "tau_minutes", "p", "replicate", "value"])
        for tau, p, dist in zip(self.tau_minutes, self.lag_orders, self.values):
            for r, v in enumerate(dist):
                writer.writerow([self.metric, repr(float(tau)), p, r, repr(float(v))])
        return buf.getvalue()


def tau_to_samples(tau_minutes: float, resolution_s: float = DEFAULT_RESOLUTION_S) -> int:
    n = tau_minutes * 60.0 / resolution_s
    n_int = int(round(n))
    if n_int < 2 or abs(n - n_int) > 1e-9:
        raise ValueError(f"tau of {tau_minutes} minutes is not a whole number of samples")
    return n_int


def _fit_stable_truth(base: np.ndarray, n_tau: int, p: int, rng: np.random.Generator, max_tries: int = 100) -> VarModel:
    """Fit a ground-truth model on a randomly placed segment; very short
    segments occasionally fit past the stability boundary and cannot serve as
    a simulation ground truth, so unstable fits are redrawn."""
    for _ in range(max_tries):
        start = int(rng.integers(0, base.shape[0] - n_tau + 1))
        truth = fit_var(base[start : start + n_tau], p)
        if truth.is_stable(tol=0.0):
            return truth
    raise ValueError(f"no stable fit found in {max_tries} segments of {n_tau} samples")


def retrain_error_experiment(
    base_series: np.ndarray | None,
    tau_grid,
    replicates: int,
    seed: int,
    resolution_s: float = DEFAULT_RESOLUTION_S,
    p: int = 1,
    K: int = 4,
) -> ExperimentReport:
    """Estimate the VAR retraining error per training length.

    With `base_series` (an (n, K) standardized array), each replicate fits the
    ground truth on a randomly placed segment of length tau, as one would on
    recorded ambient data.  Without it, each replicate draws one random stable
    model, simulates the longest tau once, and refits on nested prefixes; the
    shared noise keeps the per-tau estimates comparable.
    """
    taus = [float(t) for t in tau_grid]
    n_by_tau = [tau_to_samples(t, resolution_s) for t in taus]
    n_max = max(n_by_tau)
    if base_series is not None:
        base_series = np.asarray(base_series, dtype=float)
        if base_series.shape[0] < n_max:
            raise ValueError(f"base series has {base_series.shape[0]} samples, need {n_max}")
        K = base_series.shape[1]
    dists: list = [[] for _ in taus]
    for r in range(replicates):
        if base_series is None:
            truth = random_stable_var(K, p, np.random.default_rng([seed, r, 0]))
            sim = simulate(truth, n_max, seed=[seed, r, 1])
            for j, n_tau in enumerate(n_by_tau):
                refit = fit_var(sim[:n_tau], p)
                dists[j].append(matrix_distance(refit.coefs, truth.coefs))
        else:
            rng = np.random.default_rng([seed, r, 2])
            for j, n_tau in enumerate(n_by_tau):
                truth = _fit_stable_truth(base_series, n_tau, p, rng)
                sim = simulate(truth, n_tau, seed=[seed, r, 3, j])
                refit = fit_var(sim, p)
                dists[j].append(matrix_distance(refit.coefs, truth.coefs))
    return ExperimentReport(
        metric="D1_retrain",
        tau_minutes=tuple(taus),
        lag_orders=tuple([p] * len(taus)),
        values=tuple(tuple(d) for d in dists),
        replicate_count=replicates,
        seed=seed,
    )


def drift_experiment(
    series: np.ndarray, tau_grid, resolution_s: float = DEFAULT_RESOLUTION_S, p: int = 1
) -> ExperimentReport:
    """Model drift between consecutive windows of a recorded series.

    For each tau, the series is tiled with disjoint consecutive pairs
    [t, t+tau) / [t+tau, t+2 tau); D2 is the coefficient distance between the
    two fits, reported for every pair.  Pair counts vary with tau, so the
    report carries no fixed replicate count.
    """
    series = np.asarray(series, dtype=float)
    taus = [float(t) for t in tau_grid]
    groups = []
    for t in taus:
        n_tau = tau_to_samples(t, resolution_s)
        n_pairs = series.shape[0] // (2 * n_tau)
        if n_pairs < 1:
            raise ValueError(f"series too short for tau of {t} minutes (need {2 * n_tau} samples)")
        vals = []
        for i in range(n_pairs):
            a = fit_var(series[2 * i * n_tau : (2 * i + 1) * n_tau], p)
            b = fit_var(series[(2 * i + 1) * n_tau : (2 * i + 2) * n_tau], p)
            vals.append(matrix_distance(a.coefs, b.coefs))
        groups.append(tuple(vals))
    return ExperimentReport(
        metric="D2_drift",
        tau_minutes=tuple(taus),
        lag_orders=tuple([p] * len(taus)),
        values=tuple(groups),
        replicate_count=None,
        seed=None,
    )


def lag_depth_experiment(
    base_series: np.ndarray | None,
    pairs,
    replicates: int,
    seed: int,
    resolution_s: float = DEFAULT_RESOLUTION_S,
    K: int = 4,
) -> ExperimentReport:
    """Retraining error per (lag order, tau) pair.

    Multi-lag distances average over all lag matrices, so orders are
    comparable on one scale.
    """
    pairs = [(int(p), float(t)) for p, t in pairs]
    dists: list = [[] for _ in pairs]
    for j, (p, tau) in enumerate(pairs):
        n_tau = tau_to_samples(tau, resolution_s)
        if base_series is not None:
            base = np.asarray(base_series, dtype=float)
            if base.shape[0] < n_tau:
                raise ValueError(f"base series has {base.shape[0]} samples, need {n_tau}")
        for r in range(replicates):
            if base_series is None:
                truth = random_stable_var(K, p, np.random.default_rng([seed, j, r, 0]))
            else:
                truth = _fit_stable_truth(base, n_tau, p, np.random.default_rng([seed, j, r, 2]))
            sim = simulate(truth, n_tau, seed=[seed, j, r, 1])
            refit = fit_var(sim, p)
            dists[j].append(matrix_distance(refit.coefs, truth.coefs))
    return ExperimentReport(
        metric="D1_lag_depth",
        tau_minutes=tuple(t for _, t in pairs),
        lag_orders=tuple(p for p, _ in pairs),
        values=tuple(tuple(d) for d in dists),
        replicate_count=replicates,
        seed=seed,
    )


def synthesize_drifting_series(
    base: VarModel,
    n: int,
    seed,
    drift_amplitude: float,
    drift_period: float,
    burn_in: int = 200,
) -> np.ndarray:
    """Simulate a VAR(1) whose coefficient matrix drifts slowly over time.

    The coefficients move piecewise-linearly (a triangle wave with
    `drift_period` steps per full cycle) between `base.coefs` and a displaced
    matrix `base.coefs + drift_amplitude * P`, where P is a rank-one pattern
    from an orthogonal vector pair normalized to unit average absolute
    element, so `drift_amplitude` is directly on the coefficient-distance
    scale.  The displacement is shrunk if any point on the path would be
    unstable.  Consecutive-window fits of such a series reproduce the
    increase-then-level-off drift signature of a slowly changing system.
    """
    if base.p != 1:
        raise ValueError("drifting synthesis supports lag order 1")
    rng = np.random.default_rng(seed)
    K = base.K
    L = np.linalg.cholesky(base.sigma_regularized())
    basis = np.linalg.qr(rng.standard_normal((K, 2)))[0]
    pattern = np.outer(basis[:, 0], basis[:, 1])
    pattern /= np.mean(np.abs(pattern))
    delta = drift_amplitude * pattern
    for _ in range(60):
        radii = [
            np.max(np.abs(np.linalg.eigvals(base.coefs[0] + w * delta)))
            for w in np.linspace(0.0, 1.0, 21)
        ]
        if max(radii) < 0.995:
            break
        delta = 0.9 * delta
    else:
        raise ValueError("could not find a stable drift path; reduce drift_amplitude")
    total = n + burn_in
    shocks = rng.standard_normal((total, K)) @ L.T
    out = np.empty((total + 1, K))
    out[0] = base.stationary_mean()
    half = drift_period / 2.0
    for t in range(total):
        w = abs((t % drift_period) - half) / half  # triangle wave in [0, 1]
        out[t + 1] = base.c + (base.coefs[0] + w * delta) @ out[t] + shocks[t]
    return out[1 + burn_in :]
