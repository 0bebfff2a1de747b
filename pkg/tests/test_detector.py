import numpy as np
import pytest
from scipy import integrate

from conftest import random_spd
from gridwatch.detector import (
    Detector,
    ResidualScorer,
    ScoringNumericsError,
    conditional_scores,
    cooccurrence_counts,
    event_feature_scores,
    format_cooccurrence,
    mahalanobis_score,
    minmax_detect,
    minmax_scan,
    survey_trigger_sets,
    DEFAULT_MINMAX_THRESHOLDS,
    REPORT_THRESHOLD_PRESETS,
)
from gridwatch.varmodel import VarModel, random_stable_var, simulate


def conditional_oracle_precision(sigma, r):
    """Numerical Gaussian-conditioning oracle via the full precision matrix:
    mean_k = r_k - (P r)_k / P_kk, var_k = 1 / P_kk.  A different route than
    the per-channel Schur-complement solves used by the implementation."""
    P = np.linalg.inv(sigma)
    Pr = P @ r
    out = np.empty(len(r))
    for k in range(len(r)):
        mu = r[k] - Pr[k] / P[k, k]
        sd = np.sqrt(1.0 / P[k, k])
        out[k] = abs(r[k] - mu) / sd
    return out


def conditional_oracle_quadrature(sigma, r, k):
    """Brute-force oracle: integrate the joint Gaussian density over x_k with
    the other components clamped to r, and read off the conditional mean and
    standard deviation numerically."""
    P = np.linalg.inv(sigma)

    def density(x):
        v = r.copy()
        v[k] = x
        return np.exp(-0.5 * v @ P @ v)

    width = 12.0 * np.sqrt(sigma[k, k])
    lo, hi = r[k] - width, r[k] + width
    z, _ = integrate.quad(density, lo, hi, limit=300)
    mean, _ = integrate.quad(lambda x: x * density(x), lo, hi, limit=300)
    mean /= z
    var, _ = integrate.quad(lambda x: (x - mean) ** 2 * density(x), lo, hi, limit=300)
    var /= z
    return abs(r[k] - mean) / np.sqrt(var)


def chi4_tail(t):
    """P(chi_4 > t) by numerical integration of the chi density with 4
    degrees of freedom, f(x) = x^3 exp(-x^2/2) / 2."""
    val, _ = integrate.quad(lambda x: 0.5 * x**3 * np.exp(-0.5 * x * x), t, np.inf)
    return val


class TestMahalanobis:
    def test_zero_residual(self):
        assert mahalanobis_score(np.zeros(4), np.eye(4)) == 0.0

    def test_euclidean_for_identity(self):
        assert mahalanobis_score(np.array([3.0, 4.0, 0.0, 0.0]), np.eye(4)) == pytest.approx(5.0, rel=1e-7)

    def test_diagonal_scaling(self):
        sigma = np.diag([4.0, 1.0, 1.0, 1.0])
        assert mahalanobis_score(np.array([2.0, 0.0, 0.0, 0.0]), sigma) == pytest.approx(1.0, rel=1e-7)

    def test_transformation_equivariance(self):
        # exact in exact arithmetic; the mandated diagonal regularization adds
        # a relative perturbation of order 1e-8 * condition number, so test
        # with bounded-condition transforms at a matching tolerance
        rng = np.random.default_rng(0)
        for _ in range(50):
            sigma = random_spd(rng)
            r = rng.normal(size=4)
            Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
            M = Q * rng.uniform(0.5, 2.0, size=4)
            base = mahalanobis_score(r, sigma)
            mapped = mahalanobis_score(M @ r, M @ sigma @ M.T)
            assert abs(mapped - base) < 1e-6 * max(1.0, base)

    def test_transformation_equivariance_exact_form(self):
        # the unregularized quadratic form itself is exactly invariant
        rng = np.random.default_rng(20)
        for _ in range(20):
            sigma = random_spd(rng)
            r = rng.normal(size=4)
            M = rng.normal(size=(4, 4)) + 0.5 * np.eye(4)
            base = np.sqrt(r @ np.linalg.solve(sigma, r))
            mapped_sigma = M @ sigma @ M.T
            mapped = np.sqrt((M @ r) @ np.linalg.solve(mapped_sigma, M @ r))
            assert abs(mapped - base) < 1e-7 * max(1.0, base)

    def test_whitened_components_identity(self):
        rng = np.random.default_rng(1)
        scorer = ResidualScorer(random_spd(rng))
        for _ in range(10):
            r = rng.normal(size=4)
            L = np.linalg.cholesky(scorer.sigma)
            w = np.linalg.solve(L, r)
            assert scorer.mahalanobis(r) ** 2 == pytest.approx(np.sum(w * w), rel=1e-9)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        scorer = ResidualScorer(random_spd(rng))
        R = rng.normal(size=(50, 4))
        batch = scorer.mahalanobis_batch(R)
        for i in range(50):
            assert batch[i] == pytest.approx(scorer.mahalanobis(R[i]), rel=1e-12)

    def test_non_spd_rejected(self):
        sigma = np.diag([1.0, 1.0, 1.0, -5.0])
        with pytest.raises(ScoringNumericsError):
            ResidualScorer(sigma)


class TestConditional:
    def test_identity_reduces_to_marginal(self):
        scores = conditional_scores(np.array([2.0, 0.0, 0.0, 0.0]), np.eye(4))
        assert np.allclose(scores, [2.0, 0.0, 0.0, 0.0], atol=1e-7)

    def test_bivariate_closed_form(self):
        # channels 0 and 1 correlated at 0.8, channels 2 and 3 independent
        sigma = np.eye(4)
        sigma[0, 1] = sigma[1, 0] = 0.8
        r = np.array([1.0, 1.0, 0.0, 0.0])
        scores = conditional_scores(r, sigma)
        # mu = 0.8, var = 1 - 0.64 = 0.36, score = 0.2 / 0.6
        assert scores[0] == pytest.approx(1.0 / 3.0, rel=1e-6)
        assert scores[1] == pytest.approx(1.0 / 3.0, rel=1e-6)

    def test_residual_equal_to_sigma_column(self):
        rng = np.random.default_rng(3)
        sigma = random_spd(rng)
        r = sigma[:, 0].copy()
        scores = conditional_scores(r, sigma)
        oracle = conditional_oracle_precision(ResidualScorer(sigma).sigma, r)
        assert np.allclose(scores, oracle, rtol=1e-9, atol=1e-12)

    def test_diagonal_sigma_exact(self):
        sigma = np.diag([4.0, 9.0, 1.0, 0.25])
        r = np.array([2.0, -3.0, 0.5, 1.0])
        scores = conditional_scores(r, sigma)
        assert np.allclose(scores, np.abs(r) / np.sqrt(np.diag(sigma)), rtol=1e-7)

    def test_precision_oracle_thousand_cases(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            sigma = random_spd(rng)
            r = rng.normal(size=4) * 3.0
            scorer = ResidualScorer(sigma)
            scores = scorer.conditional(r)
            oracle = conditional_oracle_precision(scorer.sigma, r)
            assert np.max(np.abs(scores - oracle) / np.maximum(np.abs(oracle), 1e-9)) < 1e-6

    def test_quadrature_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            sigma = random_spd(rng)
            r = rng.normal(size=4)
            scorer = ResidualScorer(sigma)
            scores = scorer.conditional(r)
            for k in range(4):
                oracle = conditional_oracle_quadrature(scorer.sigma, r, k)
                assert scores[k] == pytest.approx(oracle, rel=1e-6, abs=1e-8)

    def test_conditional_batch_matches_single(self):
        rng = np.random.default_rng(6)
        scorer = ResidualScorer(random_spd(rng))
        R = rng.normal(size=(30, 4))
        batch = scorer.conditional_batch(R)
        for i in range(30):
            assert np.allclose(batch[i], scorer.conditional(R[i]), rtol=1e-12)

    def test_multivariate_dominates_conditionals(self):
        # quadratic-form decomposition means D_M >= each conditional score
        rng = np.random.default_rng(7)
        for _ in range(200):
            scorer = ResidualScorer(random_spd(rng))
            r = rng.normal(size=4) * 2
            assert scorer.mahalanobis(r) >= np.max(scorer.conditional(r)) - 1e-9


class TestFalseAlarmRates:
    def test_scores_follow_chi4(self):
        # residuals drawn from the scoring covariance itself: D_M ~ chi(4)
        rng = np.random.default_rng(8)
        sigma = random_spd(rng)
        scorer = ResidualScorer(sigma)
        n = 200_000
        R = rng.multivariate_normal(np.zeros(4), scorer.sigma, size=n)
        scores = scorer.mahalanobis_batch(R)
        for t in (3.0, 4.0):
            empirical = np.mean(scores > t)
            expected = chi4_tail(t)
            assert expected / 2 < empirical < expected * 2


def make_detector(threshold=12.0, q=10, window=200, seed=0, sigma_scale=1.0):
    model = VarModel(
        c=np.zeros(4), coefs=(0.5 * np.eye(4))[None], sigma=sigma_scale * np.eye(4)
    )
    buffer = simulate(model, window, seed=seed)
    return model, Detector(model, buffer, threshold=threshold, q=q)


class TestDetectorStateMachine:
    def test_prediction_match_stays_normal(self):
        model, det = make_detector()
        lag = det._buffer[-1]
        perfect = model.coefs[0] @ lag
        result = det.step(perfect)
        assert det.mode == Detector.NORMAL
        assert result.score.mahalanobis == 0.0
        assert result.opened is None and result.closed is None
        assert result.appended == [(perfect, False)] or np.array_equal(result.appended[0][0], perfect)

    def test_large_deviation_opens_event(self):
        model, det = make_detector(threshold=12.0)
        lag = det._buffer[-1]
        observed = model.coefs[0] @ lag + np.array([20.0, 0.0, 0.0, 0.0])
        result = det.step(observed, timestamp=0)
        assert det.mode == Detector.ANOMALY
        assert result.opened is not None
        assert {"multivariate", "V"} <= set(result.opened.trigger_set)

    def test_spike_event_closes_after_q(self):
        model, det = make_detector(threshold=12.0, q=10)
        # one spiked observation, then ambient-perfect points
        spike = 15.0
        events = []
        steps = 0
        state = np.asarray(det._buffer[-1]).copy()
        rng = np.random.default_rng(9)
        while steps < 40 and not events:
            nxt = model.coefs[0] @ state + rng.normal(size=4) * 0.1
            obs = nxt + (np.array([spike, 0, 0, 0]) if steps == 3 else 0.0)
            result = det.step(obs, timestamp=steps)
            if result.opened is not None:
                opened_at = steps
            if result.closed is not None:
                events.append(result.closed)
            state = nxt
            steps += 1
        assert len(events) == 1
        ev = events[0]
        assert ev.start_timestamp == 3 and ev.end_timestamp == 13
        assert ev.returned
        assert len(ev.score_window) == 10
        assert ev.score_window[0].mahalanobis > 12.0

    def test_imputation_on_returned_event(self):
        model, det = make_detector(threshold=10.0, q=4)
        buffer_before = np.array(det._buffer)
        lag = np.asarray(det._buffer[-1]).copy()
        trigger_obs = model.coefs[0] @ lag + np.array([30.0, 0, 0, 0])
        det.step(trigger_obs, timestamp=0)
        forecasts = det._trajectory.copy()
        closed = None
        ambient = [model.coefs[0] @ forecasts[j] for j in range(4)]
        for j in range(4):
            result = det.step(forecasts[j + 1], timestamp=j + 1)  # exactly on forecast: score 0
            if result.closed is not None:
                closed = result
        assert closed is not None and closed.closed.returned
        appended = closed.appended
        assert len(appended) == 5
        # trigger point was flagged: imputed with its forecast, not the spike
        assert appended[0][1] is True
        assert np.allclose(appended[0][0], forecasts[0])
        # trailing points were below threshold: observed values kept
        assert all(flag is False for _, flag in appended[1:])
        tail = np.array(det._buffer)[-5:]
        assert np.allclose(tail[0], forecasts[0])

    def test_level_shift_keeps_observations(self):
        model, det = make_detector(threshold=10.0, q=4)
        lag = np.asarray(det._buffer[-1]).copy()
        shift = np.array([25.0, 0, 0, 0])
        state = lag
        closed = None
        for j in range(6):
            nxt = model.coefs[0] @ state
            obs = nxt + shift
            result = det.step(obs, timestamp=j)
            if result.closed is not None:
                closed = result
                break
            state = nxt  # model state unaffected by additive offset on observation
        assert closed is not None
        assert closed.closed.returned is False
        # all observations kept so the model can adapt to the new level
        assert all(flag is False for _, flag in closed.appended)
        tail = np.array(det._buffer)[-1]
        assert tail[0] > 10.0

    def test_refresh_swaps_model_between_ticks(self):
        model, det = make_detector()
        det.step(np.zeros(4))
        assert det.model_stale
        new_model = VarModel(c=np.zeros(4), coefs=(0.4 * np.eye(4))[None], sigma=np.eye(4))
        det.refresh(new_model, np.zeros((50, 4)))
        assert det.model is new_model and not det.model_stale

    def test_refresh_rejected_during_anomaly(self):
        model, det = make_detector(threshold=5.0)
        det.step(np.full(4, 50.0))
        assert det.mode == Detector.ANOMALY
        with pytest.raises(RuntimeError):
            det.refresh(model, np.zeros((50, 4)))

    def test_threshold_validation(self):
        _, det = make_detector()
        with pytest.raises(ValueError):
            det.set_threshold(-1.0)
        det.set_threshold(15.0)
        assert det.threshold == 15.0

    def test_event_ids_increment(self):
        model, det = make_detector(threshold=5.0, q=2)
        ids = []
        for j in range(8):
            result = det.step(np.full(4, 40.0 if j % 4 == 0 else 0.0), timestamp=j)
            if result.opened is not None:
                ids.append(result.opened.event_id)
        assert ids == sorted(ids) and len(set(ids)) == len(ids)


class TestMinMax:
    def test_constant_window_never_flags(self):
        assert not minmax_detect(np.full(20, 3.3), sigma_full=1.0, k_threshold=0.1)

    def test_boundary_is_strict(self):
        window = np.zeros(20)
        window[0] = 3.0
        assert not minmax_detect(window, sigma_full=1.0, k_threshold=3.0)
        assert minmax_detect(window, sigma_full=0.999, k_threshold=3.0)

    def test_empty_window(self):
        with pytest.raises(ValueError, match="empty"):
            minmax_detect(np.array([]), 1.0, 3.0)

    def test_default_thresholds(self):
        assert DEFAULT_MINMAX_THRESHOLDS == {"V": 3.0, "I": 4.0, "sin_diff": 4.0, "F": 6.0}

    def test_scan_flags_range_burst(self):
        rng = np.random.default_rng(10)
        values = rng.normal(size=(100, 4)) * 0.01
        values[50, 0] += 5.0
        # sigma_full is the standard deviation of the full history
        sigmas = values.std(axis=0)
        flags = minmax_scan(values, sigmas)
        assert flags[50:69, 0].all()
        assert not flags[:49, 0].any()


class TestCooccurrence:
    def test_empty(self):
        assert cooccurrence_counts([]) == {}

    def test_counting(self):
        class E:
            def __init__(self, ts):
                self.trigger_set = frozenset(ts)

        events = [E({"multivariate"}), E({"multivariate"}), E({"multivariate", "V"})]
        counts = cooccurrence_counts(events)
        assert counts[frozenset({"multivariate"})] == 2
        assert counts[frozenset({"multivariate", "V"})] == 1
        table = format_cooccurrence(counts)
        assert "2" in table and "multivariate" in table

    def test_conditional_trigger_implies_multivariate(self):
        # per-channel injections: whenever a conditional fires, the
        # multivariate score must be in the trigger set as well
        model, det = make_detector(threshold=8.0, q=3)
        rng = np.random.default_rng(11)
        events = []
        for j in range(200):
            obs = rng.normal(size=4) * 0.3
            if j % 20 == 5:
                obs[rng.integers(0, 4)] += 20.0
            result = det.step(obs, timestamp=j)
            if result.closed is not None:
                events.append(result.closed)
        assert events
        for ev in events:
            if ev.trigger_set & {"V", "I", "sin_diff", "F"}:
                assert "multivariate" in ev.trigger_set


class TestCountdownBounds:
    def test_countdown_stays_within_one_to_q(self):
        model, det = make_detector(threshold=10.0, q=7)
        assert det.mode == Detector.NORMAL and det._countdown == 0
        det.step(np.full(4, 40.0), timestamp=0)
        seen = []
        while det.mode == Detector.ANOMALY:
            seen.append(det._countdown)
            det.step(np.zeros(4), timestamp=len(seen))
        assert seen[0] == 7 and seen[-1] == 1
        assert all(1 <= c <= 7 for c in seen)
        assert det._countdown == 0  # back in NORMAL mode


class TestVar2Detector:
    def test_var2_event_lifecycle(self):
        model = random_stable_var(4, 2, np.random.default_rng(40), spectral_radius=0.6)
        buffer = simulate(model, 150, seed=41)
        det = Detector(model, buffer, threshold=10.0, q=5)
        closed = None
        rng = np.random.default_rng(42)
        for t in range(60):
            obs = rng.normal(size=4) * 0.1
            if t == 5:
                obs[0] += 30.0
            result = det.step(obs, timestamp=t)
            if result.closed is not None:
                closed = result.closed
        assert closed is not None
        assert closed.start_timestamp == 5
        assert "multivariate" in closed.trigger_set
        assert len(closed.score_window) == 6  # q + 1 scores, capped by feature window


class TestSurvey:
    def test_presets_documented(self):
        assert REPORT_THRESHOLD_PRESETS == (5.0, 15.0)

    def test_counts_partition_flagged_ticks(self):
        mah = np.array([1.0, 6.0, 20.0, 2.0])
        cond = np.array(
            [
                [0.5, 0.5, 0.5, 0.5],
                [5.5, 0.5, 0.5, 0.5],
                [0.5, 0.5, 0.5, 0.5],
                [0.5, 0.5, 0.5, 0.5],
            ]
        )
        counts = survey_trigger_sets(mah, cond, 5.0)
        assert counts[frozenset({"multivariate", "V"})] == 1
        assert counts[frozenset({"multivariate"})] == 1
        assert sum(counts.values()) == 2

    def test_lower_preset_flags_more(self):
        rng = np.random.default_rng(43)
        scorer = ResidualScorer(random_spd(rng))
        R = rng.multivariate_normal(np.zeros(4), scorer.sigma, size=20_000)
        mah = scorer.mahalanobis_batch(R)
        cond = scorer.conditional_batch(R)
        low = survey_trigger_sets(mah, cond, REPORT_THRESHOLD_PRESETS[0])
        high = survey_trigger_sets(mah, cond, REPORT_THRESHOLD_PRESETS[1])
        assert sum(low.values()) > sum(high.values())
        # the multivariate score covers every channel trigger
        for trigger_set in low:
            if trigger_set & {"V", "I", "sin_diff", "F"}:
                assert "multivariate" in trigger_set


class TestEventFeatureScores:
    def test_multivariate_sequence(self):
        model, det = make_detector(threshold=8.0, q=3)
        det.step(np.array([30.0, 0, 0, 0]), timestamp=0)
        closed = None
        for j in range(3):
            closed = det.step(np.zeros(4), timestamp=j + 1).closed or closed
        name, seq = event_feature_scores(closed)
        assert name == "multivariate"
        assert len(seq) == len(closed.score_window)
        assert seq[0] == closed.score_window[0].mahalanobis
