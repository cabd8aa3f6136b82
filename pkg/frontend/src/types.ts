// Wire types, mirroring the service's JSON payloads exactly.

export interface ScoredRecord {
  instance_id: number;
  timestamp: number;
  score: number;
  mean_depth: number;
  fi: number[];
  flagged: boolean;
  threshold_used: number;
  warmup: boolean;
}

export interface IceEntry {
  age: number;
  weight: number;
  values: number[];
}

export interface PdpSnapshot {
  feature: string;
  grid: number[];
  pdp: number[];
  fi: number;
  ice: IceEntry[];
}

export interface EventPayload {
  event_id: number;
  from: number;
  to: number;
  peak_score: number;
  peak_id: number;
  top_features: string[];
  n_flagged: number;
  label?: string | null;
}

export interface RunMark {
  at_id: number;
  note: string;
  created_at: number;
}

export interface ApiError {
  status: number;
  code: string;
  message: string;
}

export type Verdict = "confirmed_fault" | "normal" | "unknown";

export interface LabelDraft {
  event_id: number;
  from: number;
  to: number;
  verdict: Verdict;
  note?: string;
}
