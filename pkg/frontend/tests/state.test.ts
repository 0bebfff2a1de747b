import { describe, expect, it } from 'vitest';

import {
  EventRecord,
  RawRecord,
  ScoreRecord,
  SnapshotRecord,
  StreamRecord,
  ThresholdRecord,
} from '../src/records.js';
import {
  applyLog,
  applyRecord,
  initialState,
  labelAcked,
  labelEdited,
  labelRejected,
  renderModel,
  thresholdAcked,
  thresholdEdited,
  thresholdRejected,
} from '../src/state.js';

const T0 = Date.parse('2021-06-01T00:00:00Z') / 1000;

function iso(offsetS: number): string {
  return new Date((T0 + offsetS) * 1000).toISOString();
}

function score(offsetS: number, value = 1.0): ScoreRecord {
  return {
    type: 'score',
    timestamp: iso(offsetS),
    mahalanobis: value,
    cond_V: value / 2,
    cond_I: 0.1,
    cond_sin: 0.2,
    cond_F: 0.3,
  };
}

function raw(offsetS: number, v = 161000): RawRecord {
  return { type: 'raw', timestamp: iso(offsetS), V: v, I: 520, sin_diff: 0.31, F: 60 };
}

function snapshot(extra: Partial<SnapshotRecord> = {}): SnapshotRecord {
  return {
    type: 'snapshot',
    recent_scores: [],
    recent_raw: [],
    model: { var: { p: 1, K: 4, c: [0, 0, 0, 0], A: [[[0]]], Sigma: [[1]], trained_on: 120 } },
    threshold: 12,
    ticks: 100,
    ...extra,
  };
}

function eventRecord(id: number, startS: number, label: string | null = 'spike'): EventRecord {
  return {
    type: 'event_close',
    id,
    start: iso(startS),
    end: iso(startS + 5),
    trigger_set: ['multivariate', 'V'],
    threshold: 12,
    returned: true,
    feature_channel: 'multivariate',
    scores: Array.from({ length: 10 }, (_, i) => {
      const { type, ...rest } = score(startS + i * 0.5, i === 0 ? 20 : 1);
      return rest;
    }),
    raw_window: Array.from({ length: 10 }, () => [161000, 520, 0.31, 60]),
    features: { max_dist: 20, avg_dist: 3, count_above_t: 1 },
    class_label: label,
    label_source: label === null ? null : 'model',
    decision_path: {
      steps: [{ feature_index: 2, threshold: 1.5, went_left: true }],
      leaf_histogram: { spike: 50 },
      leaf_fraction: 0.25,
    },
  };
}

function sampleLog(): StreamRecord[] {
  const records: StreamRecord[] = [snapshot()];
  for (let i = 0; i < 40; i++) {
    records.push(raw(i * 0.5));
    records.push(score(i * 0.5, 1 + (i % 5) / 10));
  }
  records.push({ type: 'event_open', id: 1, start: iso(10), trigger_set: ['multivariate', 'V'], threshold: 12 });
  records.push(eventRecord(1, 10));
  const thresholdRec: ThresholdRecord = { type: 'threshold', value: 14, operator: 'op', timestamp: iso(15) };
  records.push(thresholdRec);
  records.push({ type: 'score_drops', count: 3 });
  records.push({ type: 'end', ticks: 140 });
  return records;
}

describe('record folding', () => {
  it('replaying the same record log yields the identical rendered state', () => {
    const log = sampleLog();
    const a = applyLog(initialState(), log);
    const b = applyLog(initialState(), log);
    expect(a).toEqual(b);
    expect(JSON.stringify(renderModel(a))).toEqual(JSON.stringify(renderModel(b)));
  });

  it('appends strictly in timestamp order and ignores stale records', () => {
    let state = applyLog(initialState(), [snapshot(), score(1), score(2)]);
    state = applyRecord(state, score(1.5)); // stale after a reconnect overlap
    expect(state.scores.map((p) => p.t - T0)).toEqual([1, 2]);
  });

  it('event open then close moves the event from open set to the list', () => {
    let state = applyLog(initialState(), [
      snapshot(),
      { type: 'event_open', id: 1, start: iso(10), trigger_set: ['multivariate'], threshold: 12 },
    ]);
    expect(state.openEvents).toHaveLength(1);
    state = applyRecord(state, eventRecord(1, 10));
    expect(state.openEvents).toHaveLength(0);
    expect(state.events.map((e) => e.id)).toEqual([1]);
  });

  it('stream end marks the dashboard not live', () => {
    const state = applyLog(initialState(), [snapshot(), { type: 'end', ticks: 9 }]);
    expect(state.live).toBe(false);
  });
});

describe('threshold control', () => {
  it('rendered threshold always equals the last server-acknowledged value', () => {
    let state = applyLog(initialState(), [snapshot()]);
    state = thresholdEdited(state, 15, 0);
    // while pending, the applied line still shows the acked value
    let rendered = renderModel(state);
    expect(rendered.status.threshold).toBe(12);
    expect(rendered.status.pendingThreshold).toBe(15);
    state = thresholdAcked(state, 15);
    rendered = renderModel(state);
    expect(rendered.status.threshold).toBe(15);
    expect(rendered.status.pendingThreshold).toBeNull();
    expect(rendered.charts.thresholdLine).toBe(15);
  });

  it('a stream threshold record clears the matching pending edit', () => {
    let state = applyLog(initialState(), [snapshot()]);
    state = thresholdEdited(state, 14, 0);
    state = applyRecord(state, { type: 'threshold', value: 14, operator: 'op', timestamp: iso(1) });
    expect(state.threshold).toBe(14);
    expect(state.pendingThreshold).toBeNull();
  });

  it('a rejected submission reverts with a visible reason', () => {
    let state = applyLog(initialState(), [snapshot()]);
    state = thresholdEdited(state, -2, 0);
    state = thresholdRejected(state, 'threshold must be positive');
    expect(state.pendingThreshold).toBeNull();
    expect(renderModel(state).status.thresholdError).toMatch('positive');
    expect(renderModel(state).status.threshold).toBe(12);
  });
});

describe('labeling', () => {
  it('optimistic pending label until ack, then operator label supersedes', () => {
    let state = applyLog(initialState(), [snapshot(), eventRecord(1, 10)]);
    state = labelEdited(state, 1, 'step');
    let entry = renderModel(state).eventList[0];
    expect(entry.classLabel).toBe('step');
    expect(entry.labelSource).toBe('pending');
    state = labelAcked(state, 1, 'step', iso(20));
    entry = renderModel(state).eventList[0];
    expect(entry.classLabel).toBe('step');
    expect(entry.labelSource).toBe('operator');
  });

  it('a rejected label reverts to the previous state with a reason', () => {
    let state = applyLog(initialState(), [snapshot(), eventRecord(1, 10)]);
    state = labelEdited(state, 1, 'wobble');
    state = labelRejected(state, 1, "unknown class 'wobble'");
    const entry = renderModel(state).eventList[0];
    expect(entry.classLabel).toBe('spike'); // model label restored
    expect(entry.labelSource).toBe('model');
    expect(state.labelErrors[1]).toMatch('wobble');
  });
});

describe('reconnect handling', () => {
  it('a reconnect snapshot past the last point leaves a visible gap band', () => {
    let state = applyLog(initialState(), [snapshot(), score(1), score(1.5)]);
    const resumed = snapshot({ recent_scores: [score(40), score(40.5)] });
    state = applyRecord(state, resumed);
    expect(state.gaps).toHaveLength(1);
    expect(state.gaps[0].fromT - T0).toBeCloseTo(1.5);
    expect(state.gaps[0].toT - T0).toBeCloseTo(40);
    expect(renderModel(state).charts.gapBands).toHaveLength(1);
  });

  it('a contiguous backfill leaves no gap', () => {
    let state = applyLog(initialState(), [snapshot(), score(1), score(1.5)]);
    state = applyRecord(state, snapshot({ recent_scores: [score(1.5), score(2), score(2.5)] }));
    expect(state.gaps).toHaveLength(0);
    expect(state.scores.map((p) => p.t - T0)).toEqual([1, 1.5, 2, 2.5]);
  });
});

describe('buffer caps', () => {
  it('points older than the buffer window are pruned and older thirds decimated', () => {
    let state = initialState(60); // one minute buffer
    state = applyRecord(state, snapshot());
    for (let i = 0; i < 400; i++) {
      state = applyRecord(state, score(i * 0.5));
    }
    const ts = state.scores.map((p) => p.t - T0);
    expect(Math.min(...ts)).toBeGreaterThanOrEqual(199.5 - 60);
    expect(Math.max(...ts)).toBeCloseTo(199.5);
    // decimated region keeps only whole-second points
    const old = ts.filter((t) => t < 199.5 - 20);
    expect(old.every((t) => Math.round(t * 2) % 2 === 0)).toBe(true);
    expect(state.scores.length).toBeLessThan(121);
  });
});
