// Server record and payload shapes, mirroring the gridwatch HTTP/stream API.

export interface ScoreRecord {
  type: 'score';
  timestamp: string;
  mahalanobis: number;
  cond_V: number;
  cond_I: number;
  cond_sin: number;
  cond_F: number;
}

export interface RawRecord {
  type: 'raw';
  timestamp: string;
  V: number;
  I: number;
  sin_diff: number;
  F: number;
}

export interface EventOpenRecord {
  type: 'event_open';
  id: number;
  start: string;
  trigger_set: string[];
  threshold: number;
}

export interface DecisionPathStep {
  feature_index: number;
  threshold: number;
  went_left: boolean;
}

export interface EventRecord {
  type: 'event_close' | 'event';
  id: number;
  start: string;
  end: string;
  trigger_set: string[];
  threshold: number;
  returned: boolean;
  feature_channel: string;
  scores: Omit<ScoreRecord, 'type'>[];
  raw_window: number[][];
  features: Record<string, number>;
  class_label: string | null;
  label_source: string | null;
  decision_path: {
    steps: DecisionPathStep[];
    leaf_histogram: Record<string, number>;
    leaf_fraction: number;
  };
}

export interface ThresholdRecord {
  type: 'threshold';
  value: number;
  operator: string;
  timestamp: string;
}

export interface ModelView {
  var?: { p: number; K: number; c: number[]; A: number[][][]; Sigma: number[][]; trained_on: number };
  standardization?: { intercept: number[]; slope: number[]; sigma: number[] };
  fit_tick?: number;
}

export interface SnapshotRecord {
  type: 'snapshot';
  recent_scores: ScoreRecord[];
  recent_raw: RawRecord[];
  model: ModelView;
  threshold: number;
  ticks: number;
}

export interface DropsRecord {
  type: 'score_drops';
  count: number;
}

export interface EndRecord {
  type: 'end';
  ticks: number;
}

export type StreamRecord =
  | ScoreRecord
  | RawRecord
  | EventOpenRecord
  | EventRecord
  | ThresholdRecord
  | SnapshotRecord
  | DropsRecord
  | EndRecord;

export const ANOMALY_CLASSES = ['spike', 'drop', 'step', 'oscillatory'] as const;
export type AnomalyClass = (typeof ANOMALY_CLASSES)[number];

export const FEATURE_COLUMNS = [
  'max_dist',
  'avg_dist',
  'count_above_t',
  'decile_1',
  'decile_2',
  'decile_3',
  'decile_4',
  'decile_5',
  'decile_6',
  'decile_7',
  'decile_8',
  'decile_9',
  'argmax_index',
  'osc_25',
  'osc_50',
  'osc_75',
  'return_index',
  'index_diff',
] as const;

export function parseTime(iso: string): number {
  return new Date(iso).getTime() / 1000;
}
