// View state and pure reducers. The dashboard never computes scores, FI
// or PDPs; everything here shuffles service payloads around verbatim.

import type { EventPayload, RunMark, ScoredRecord } from "./types.js";

export const DEFAULT_BUFFER_LIMIT = 5000;

export interface FeatureToggle {
  name: string;
  enabled: boolean;
}

export interface ViewState {
  featureNames: string[];
  records: ScoredRecord[]; // arrival order, newest last, bounded
  bufferLimit: number;
  marks: RunMark[];
  events: EventPayload[];
  features: FeatureToggle[];
  selectedFeature: string;
  threshold: number; // last server-acknowledged value
  pendingThreshold: number | null; // slider mid-drag (optimistic)
  suggestion: number | null;
  notice: string | null;
}

export function initialState(
  featureNames: string[],
  threshold: number,
  bufferLimit: number = DEFAULT_BUFFER_LIMIT,
): ViewState {
  return {
    featureNames: [...featureNames],
    records: [],
    bufferLimit,
    marks: [],
    events: [],
    features: featureNames.map((name) => ({ name, enabled: true })),
    selectedFeature: featureNames[0] ?? "",
    threshold: clampThreshold(threshold),
    pendingThreshold: null,
    suggestion: null,
    notice: null,
  };
}

/** Slider values live strictly inside (0, 1), matching the server rule. */
export function clampThreshold(value: number): number {
  if (!Number.isFinite(value)) return 0.5;
  return Math.min(0.999, Math.max(0.001, value));
}

export function pushRecord(state: ViewState, record: ScoredRecord): ViewState {
  const records = [...state.records, record];
  // truncation keeps the newest records
  const excess = records.length - state.bufferLimit;
  return { ...state, records: excess > 0 ? records.slice(excess) : records };
}

export function pushMark(state: ViewState, mark: RunMark): ViewState {
  return { ...state, marks: [...state.marks, mark] };
}

export function setEvents(state: ViewState, events: EventPayload[]): ViewState {
  return { ...state, events: [...events] };
}

export function setSuggestion(state: ViewState, value: number | null): ViewState {
  return { ...state, suggestion: value };
}

export function setNotice(state: ViewState, notice: string | null): ViewState {
  return { ...state, notice };
}

export function selectFeature(state: ViewState, name: string): ViewState {
  if (!state.featureNames.includes(name)) return state;
  return { ...state, selectedFeature: name };
}

// -- threshold drag lifecycle --------------------------------------------------

export function dragThreshold(state: ViewState, value: number): ViewState {
  return { ...state, pendingThreshold: clampThreshold(value) };
}

export function thresholdCommitted(state: ViewState, value: number): ViewState {
  return { ...state, threshold: value, pendingThreshold: null, notice: null };
}

export function thresholdRejected(state: ViewState, message: string): ViewState {
  // optimistic slider reverts to the last acknowledged position
  return { ...state, pendingThreshold: null, notice: message };
}

export function effectiveThreshold(state: ViewState): number {
  return state.pendingThreshold ?? state.threshold;
}

// -- feature toggles ----------------------------------------------------------

export function featureSet(state: ViewState, name: string, enabled: boolean): ViewState {
  return {
    ...state,
    notice: null,
    features: state.features.map((f) => (f.name === name ? { ...f, enabled } : f)),
  };
}

export function featureRejected(state: ViewState, name: string, message: string): ViewState {
  // the switch snaps back; the server is the source of truth
  return { ...state, notice: `${name}: ${message}` };
}

// -- derived views ---------------------------------------------------------------

export function latestFi(state: ViewState): number[] | null {
  const last = state.records[state.records.length - 1];
  return last ? last.fi : null;
}

/**
 * Indices of the k largest fi values, ties broken toward the lower index —
 * the exact ordering the service uses for event top_features.
 */
export function topFeatureIndices(fi: number[], k = 3): number[] {
  return fi
    .map((value, index) => ({ value, index }))
    .sort((a, b) => b.value - a.value || a.index - b.index)
    .slice(0, k)
    .map((e) => e.index);
}

export function topFeatures(state: ViewState, k = 3): { name: string; fi: number }[] {
  const fi = latestFi(state);
  if (!fi) return [];
  return topFeatureIndices(fi, k).map((j) => ({
    name: state.featureNames[j],
    fi: fi[j],
  }));
}

/** Per-record fi series of one feature, for the FI strip chart. */
export function fiSeries(state: ViewState, featureIndex: number): number[] {
  return state.records.map((r) => r.fi[featureIndex]);
}
