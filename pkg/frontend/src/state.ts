// Pure dashboard state: a fold over the server record stream plus the
// operator's pending local edits.  No I/O here; replaying the same record
// log always reproduces the same state and the same render model.

import {
  EventRecord,
  RawRecord,
  ScoreRecord,
  SnapshotRecord,
  StreamRecord,
  ModelView,
  parseTime,
} from './records.js';

export interface ScorePoint {
  t: number;
  mahalanobis: number;
  cond: [number, number, number, number];
}

export interface RawPoint {
  t: number;
  values: [number, number, number, number];
}

export interface Gap {
  fromT: number;
  toT: number;
}

export interface PendingThreshold {
  value: number;
  sentAt: number;
}

export interface EventListEntry {
  id: number;
  start: string;
  triggerSet: string[];
  classLabel: string | null;
  labelSource: string | null;
  returned: boolean;
}

export interface DashboardState {
  connected: boolean;
  live: boolean;
  model: ModelView | null;
  /** last server-acknowledged threshold; the rendered line always shows this */
  threshold: number | null;
  pendingThreshold: PendingThreshold | null;
  thresholdError: string | null;
  scores: ScorePoint[];
  raw: RawPoint[];
  gaps: Gap[];
  events: EventRecord[];
  openEvents: { id: number; start: string; triggerSet: string[] }[];
  selectedId: number | null;
  selectedDetail: EventRecord | null;
  detailError: string | null;
  pendingLabels: Record<number, string>;
  labelErrors: Record<number, string>;
  droppedScores: number;
  ticks: number;
  /** client-side buffer cap in seconds (older points are decimated) */
  bufferSeconds: number;
}

export function initialState(bufferSeconds = 15 * 60): DashboardState {
  return {
    connected: false,
    live: true,
    model: null,
    threshold: null,
    pendingThreshold: null,
    thresholdError: null,
    scores: [],
    raw: [],
    gaps: [],
    events: [],
    openEvents: [],
    selectedId: null,
    selectedDetail: null,
    detailError: null,
    pendingLabels: {},
    labelErrors: {},
    droppedScores: 0,
    ticks: 0,
    bufferSeconds,
  };
}

function toScorePoint(r: ScoreRecord | Omit<ScoreRecord, 'type'>): ScorePoint {
  return {
    t: parseTime(r.timestamp),
    mahalanobis: r.mahalanobis,
    cond: [r.cond_V, r.cond_I, r.cond_sin, r.cond_F],
  };
}

function toRawPoint(r: RawRecord): RawPoint {
  return { t: parseTime(r.timestamp), values: [r.V, r.I, r.sin_diff, r.F] };
}

/** Keep the newest third at full resolution; decimate older points to every
 * second sample by their timestamp (deterministic under replay). */
function capBuffer<P extends { t: number }>(points: P[], bufferSeconds: number): P[] {
  if (points.length === 0) return points;
  const newest = points[points.length - 1].t;
  const oldest = newest - bufferSeconds;
  const fullFrom = newest - bufferSeconds / 3;
  return points.filter((p) => p.t >= oldest && (p.t >= fullFrom || Math.round(p.t * 2) % 2 === 0));
}

function appendInOrder<P extends { t: number }>(points: P[], point: P): P[] {
  // charts append in timestamp order; a stale record (reconnect overlap) is ignored
  if (points.length > 0 && point.t <= points[points.length - 1].t) return points;
  return [...points, point];
}

function upsertEvent(events: EventRecord[], record: EventRecord): EventRecord[] {
  const rest = events.filter((e) => e.id !== record.id);
  return [...rest, record].sort((a, b) => a.id - b.id);
}

function applySnapshot(state: DashboardState, snap: SnapshotRecord): DashboardState {
  let scores = state.scores;
  let raw = state.raw;
  let gaps = state.gaps;
  const lastT = scores.length > 0 ? scores[scores.length - 1].t : null;
  for (const r of snap.recent_scores ?? []) scores = appendInOrder(scores, toScorePoint(r));
  for (const r of snap.recent_raw ?? []) raw = appendInOrder(raw, toRawPoint(r));
  if (lastT !== null) {
    const backfill = (snap.recent_scores ?? []).map((r) => parseTime(r.timestamp)).filter((t) => t > lastT);
    const resumeT = backfill.length > 0 ? Math.min(...backfill) : null;
    // a reconnect that could not backfill contiguously leaves a visible gap
    if (resumeT !== null && resumeT - lastT > 2.0) {
      gaps = [...gaps, { fromT: lastT, toT: resumeT }];
    }
  }
  return {
    ...state,
    connected: true,
    model: snap.model ?? state.model,
    threshold: snap.threshold ?? state.threshold,
    ticks: snap.ticks ?? state.ticks,
    scores: capBuffer(scores, state.bufferSeconds),
    raw: capBuffer(raw, state.bufferSeconds),
    gaps,
  };
}

export function applyRecord(state: DashboardState, record: StreamRecord): DashboardState {
  switch (record.type) {
    case 'snapshot':
      return applySnapshot(state, record);
    case 'score':
      return { ...state, scores: capBuffer(appendInOrder(state.scores, toScorePoint(record)), state.bufferSeconds) };
    case 'raw':
      return { ...state, raw: capBuffer(appendInOrder(state.raw, toRawPoint(record)), state.bufferSeconds) };
    case 'event_open':
      return {
        ...state,
        openEvents: [
          ...state.openEvents.filter((e) => e.id !== record.id),
          { id: record.id, start: record.start, triggerSet: record.trigger_set },
        ],
      };
    case 'event_close':
    case 'event':
      return {
        ...state,
        events: upsertEvent(state.events, record),
        openEvents: state.openEvents.filter((e) => e.id !== record.id),
        selectedDetail: state.selectedId === record.id ? record : state.selectedDetail,
      };
    case 'threshold': {
      const pending = state.pendingThreshold;
      return {
        ...state,
        threshold: record.value,
        pendingThreshold: pending !== null && pending.value === record.value ? null : pending,
      };
    }
    case 'score_drops':
      return { ...state, droppedScores: record.count };
    case 'end':
      return { ...state, live: false, ticks: record.ticks };
    default:
      return state;
  }
}

export function applyLog(state: DashboardState, records: StreamRecord[]): DashboardState {
  return records.reduce(applyRecord, state);
}

// -- local edits (optimistic, reverted on rejection) -------------------------

export function thresholdEdited(state: DashboardState, value: number, now: number): DashboardState {
  return { ...state, pendingThreshold: { value, sentAt: now }, thresholdError: null };
}

export function thresholdAcked(state: DashboardState, value: number): DashboardState {
  const pending = state.pendingThreshold;
  return {
    ...state,
    threshold: value,
    pendingThreshold: pending !== null && pending.value === value ? null : pending,
    thresholdError: null,
  };
}

export function thresholdRejected(state: DashboardState, reason: string): DashboardState {
  return { ...state, pendingThreshold: null, thresholdError: reason };
}

export function labelEdited(state: DashboardState, eventId: number, cls: string): DashboardState {
  const errors = { ...state.labelErrors };
  delete errors[eventId];
  return { ...state, pendingLabels: { ...state.pendingLabels, [eventId]: cls }, labelErrors: errors };
}

export function labelAcked(state: DashboardState, eventId: number, cls: string, labeledAt: string): DashboardState {
  const pending = { ...state.pendingLabels };
  delete pending[eventId];
  const patch = (e: EventRecord): EventRecord =>
    e.id === eventId ? { ...e, class_label: cls, label_source: 'operator' } : e;
  return {
    ...state,
    pendingLabels: pending,
    events: state.events.map(patch),
    selectedDetail: state.selectedDetail !== null ? patch(state.selectedDetail) : null,
  };
}

export function labelRejected(state: DashboardState, eventId: number, reason: string): DashboardState {
  const pending = { ...state.pendingLabels };
  delete pending[eventId];
  return { ...state, pendingLabels: pending, labelErrors: { ...state.labelErrors, [eventId]: reason } };
}

export function eventSelected(state: DashboardState, eventId: number, detail: EventRecord | null, error: string | null): DashboardState {
  return { ...state, selectedId: eventId, selectedDetail: detail, detailError: error };
}

export function disconnected(state: DashboardState): DashboardState {
  return { ...state, connected: false };
}

// -- render model -------------------------------------------------------------
// Everything the DOM/canvas layer paints, as plain data.  Pure function of the
// state, so replaying a record log twice renders identically.

export interface SeriesRender {
  points: { t: number; y: number }[];
}

export interface RenderModel {
  status: {
    connected: boolean;
    live: boolean;
    ticks: number;
    droppedScores: number;
    threshold: number | null;
    pendingThreshold: number | null;
    thresholdError: string | null;
  };
  charts: {
    raw: SeriesRender[];
    score: SeriesRender;
    conditionals: SeriesRender[];
    thresholdLine: number | null;
    eventMarkers: { t: number; id: number; open: boolean }[];
    gapBands: Gap[];
  };
  eventList: EventListEntry[];
  detail: {
    id: number;
    classLabel: string | null;
    labelSource: string | null;
    pendingLabel: string | null;
    labelError: string | null;
    triggerSet: string[];
    featureChannel: string;
    returned: boolean;
    threshold: number;
    scoreWindow: { t: number; y: number }[];
    rawWindow: number[][];
    features: [string, number][];
    decisionPath: { feature_index: number; threshold: number; went_left: boolean }[];
    leafHistogram: Record<string, number>;
  } | null;
  model: ModelView | null;
}

export function renderModel(state: DashboardState): RenderModel {
  const markers = [
    ...state.events.map((e) => ({ t: parseTime(e.start), id: e.id, open: false })),
    ...state.openEvents.map((e) => ({ t: parseTime(e.start), id: e.id, open: true })),
  ].sort((a, b) => a.t - b.t || a.id - b.id);
  const eventList = [...state.events]
    .sort((a, b) => b.id - a.id)
    .map((e) => ({
      id: e.id,
      start: e.start,
      triggerSet: [...e.trigger_set].sort(),
      classLabel: state.pendingLabels[e.id] ?? e.class_label,
      labelSource: state.pendingLabels[e.id] !== undefined ? 'pending' : e.label_source,
      returned: e.returned,
    }));
  const detailRecord = state.selectedDetail;
  return {
    status: {
      connected: state.connected,
      live: state.live,
      ticks: state.ticks,
      droppedScores: state.droppedScores,
      threshold: state.threshold,
      pendingThreshold: state.pendingThreshold?.value ?? null,
      thresholdError: state.thresholdError,
    },
    charts: {
      raw: [0, 1, 2, 3].map((k) => ({ points: state.raw.map((p) => ({ t: p.t, y: p.values[k] })) })),
      score: { points: state.scores.map((p) => ({ t: p.t, y: p.mahalanobis })) },
      conditionals: [0, 1, 2, 3].map((k) => ({
        points: state.scores.map((p) => ({ t: p.t, y: p.cond[k] })),
      })),
      thresholdLine: state.threshold,
      eventMarkers: markers,
      gapBands: state.gaps,
    },
    eventList,
    detail:
      detailRecord === null
        ? null
        : {
            id: detailRecord.id,
            classLabel: state.pendingLabels[detailRecord.id] ?? detailRecord.class_label,
            labelSource:
              state.pendingLabels[detailRecord.id] !== undefined ? 'pending' : detailRecord.label_source,
            pendingLabel: state.pendingLabels[detailRecord.id] ?? null,
            labelError: state.labelErrors[detailRecord.id] ?? null,
            triggerSet: [...detailRecord.trigger_set].sort(),
            featureChannel: detailRecord.feature_channel,
            returned: detailRecord.returned,
            threshold: detailRecord.threshold,
            scoreWindow: detailRecord.scores.map((s) => ({ t: parseTime(s.timestamp), y: s.mahalanobis })),
            rawWindow: detailRecord.raw_window,
            features: Object.entries(detailRecord.features),
            decisionPath: detailRecord.decision_path.steps,
            leafHistogram: detailRecord.decision_path.leaf_histogram,
          },
    model: state.model,
  };
}
