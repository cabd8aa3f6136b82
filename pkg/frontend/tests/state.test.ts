import { describe, expect, it } from "vitest";

import {
  clampThreshold,
  dragThreshold,
  effectiveThreshold,
  featureRejected,
  featureSet,
  fiSeries,
  initialState,
  latestFi,
  pushRecord,
  selectFeature,
  thresholdCommitted,
  thresholdRejected,
  topFeatureIndices,
  topFeatures,
} from "../src/state.js";
import type { ScoredRecord } from "../src/types.js";

function record(id: number, score: number, fi: number[]): ScoredRecord {
  return {
    instance_id: id,
    timestamp: id * 1000,
    score,
    mean_depth: 5,
    fi,
    flagged: false,
    threshold_used: 0.7,
    warmup: false,
  };
}

const NAMES = ["a", "b", "c"];

describe("record buffer", () => {
  it("appends newest last", () => {
    let s = initialState(NAMES, 0.7);
    s = pushRecord(s, record(1, 0.5, [0, 0, 0]));
    s = pushRecord(s, record(2, 0.6, [0, 0, 0]));
    expect(s.records.map((r) => r.instance_id)).toEqual([1, 2]);
  });

  it("is bounded and keeps the newest records", () => {
    let s = initialState(NAMES, 0.7, 10);
    for (let i = 1; i <= 25; i++) s = pushRecord(s, record(i, 0.5, [0, 0, 0]));
    expect(s.records).toHaveLength(10);
    expect(s.records[0].instance_id).toBe(16);
    expect(s.records[9].instance_id).toBe(25);
  });
});

describe("threshold lifecycle", () => {
  it("clamps the slider into the open unit interval", () => {
    expect(clampThreshold(1.7)).toBe(0.999);
    expect(clampThreshold(-2)).toBe(0.001);
    expect(clampThreshold(0.4)).toBe(0.4);
  });

  it("drag is optimistic, commit adopts, reject reverts with notice", () => {
    let s = initialState(NAMES, 0.7);
    s = dragThreshold(s, 0.9);
    expect(effectiveThreshold(s)).toBe(0.9);
    expect(s.threshold).toBe(0.7);
    const committed = thresholdCommitted(s, 0.9);
    expect(committed.threshold).toBe(0.9);
    expect(committed.pendingThreshold).toBeNull();
    const rejected = thresholdRejected(s, "threshold must be in (0, 1)");
    expect(rejected.threshold).toBe(0.7); // prior position restored
    expect(effectiveThreshold(rejected)).toBe(0.7);
    expect(rejected.notice).toContain("threshold");
  });
});

describe("feature toggles", () => {
  it("toggles by name and reverts on rejection", () => {
    const s0 = initialState(NAMES, 0.7);
    const s1 = featureSet(s0, "b", false);
    expect(s1.features.map((f) => f.enabled)).toEqual([true, false, true]);
    const reverted = featureRejected(s0, "b", "cannot disable the last enabled feature");
    expect(reverted.features.map((f) => f.enabled)).toEqual([true, true, true]);
    expect(reverted.notice).toContain("b:");
  });
});

describe("derived views", () => {
  it("top feature indices break ties toward the lower index, like the server", () => {
    expect(topFeatureIndices([0.1, 0.3, 0.3, 0.2], 3)).toEqual([1, 2, 3]);
    expect(topFeatureIndices([0.5, 0.5, 0.5], 3)).toEqual([0, 1, 2]);
    expect(topFeatureIndices([1, 2, 3], 2)).toEqual([2, 1]);
  });

  it("top features read the latest record's fi verbatim", () => {
    let s = initialState(NAMES, 0.7);
    s = pushRecord(s, record(1, 0.4, [0.3, 0.1, 0.2]));
    s = pushRecord(s, record(2, 0.4, [0.05, 0.4, 0.2]));
    expect(latestFi(s)).toEqual([0.05, 0.4, 0.2]);
    expect(topFeatures(s, 2)).toEqual([
      { name: "b", fi: 0.4 },
      { name: "c", fi: 0.2 },
    ]);
  });

  it("fi series extracts one feature across records", () => {
    let s = initialState(NAMES, 0.7);
    s = pushRecord(s, record(1, 0.4, [0.1, 0.2, 0.3]));
    s = pushRecord(s, record(2, 0.4, [0.4, 0.5, 0.6]));
    expect(fiSeries(s, 1)).toEqual([0.2, 0.5]);
  });

  it("selecting an unknown feature is a no-op", () => {
    const s = initialState(NAMES, 0.7);
    expect(selectFeature(s, "zz")).toBe(s);
    expect(selectFeature(s, "c").selectedFeature).toBe("c");
  });
});
