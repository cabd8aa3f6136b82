// Page wiring: one stream subscription, REST for control, rAF redraws.

import { Api, connectStream } from "./api.js";
import { drawFi, drawPdp, drawStrip, fiGeometry, pdpGeometry, stripGeometry } from "./charts.js";
import {
  renderEventInbox,
  renderFeaturePicker,
  renderFeatureToggles,
  renderPdpMeta,
  renderThresholdControl,
  renderTopFeatures,
} from "./components.js";
import {
  ViewState,
  dragThreshold,
  featureRejected,
  featureSet,
  initialState,
  latestFi,
  pushMark,
  pushRecord,
  selectFeature,
  setEvents,
  setNotice,
  setSuggestion,
  thresholdCommitted,
  thresholdRejected,
  topFeatureIndices,
  topFeatures,
} from "./state.js";
import type { EventPayload, PdpSnapshot, Verdict } from "./types.js";

const params = new URLSearchParams(location.search);
const api = new Api(params.get("api") ?? "");

let state: ViewState = initialState([], 0.7);
let pdpSnap: PdpSnapshot | null = null;
let dirty = true;

function mutate(next: ViewState): void {
  state = next;
  dirty = true;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refreshEvents(): Promise<void> {
  const events = await api.getEvents();
  if (events.ok) mutate(setEvents(state, events.value.events));
  mutate(setSuggestion(state, await api.suggestion()));
}

async function refreshPdp(): Promise<void> {
  if (!state.selectedFeature) return;
  const snap = await api.getPdp(state.selectedFeature);
  if (snap.ok) {
    pdpSnap = snap.value;
    dirty = true;
  }
}

function handleLabel(event: EventPayload, verdict: Verdict): void {
  void api
    .postLabel({ event_id: event.event_id, from: event.from, to: event.to, verdict })
    .then((result) => {
      if (!result.ok) mutate(setNotice(state, result.error.message));
      return refreshEvents();
    });
}

function handleThresholdRelease(value: number): void {
  mutate(dragThreshold(state, value));
  void api.putThreshold(value).then((result) => {
    if (result.ok) mutate(thresholdCommitted(state, value));
    else mutate(thresholdRejected(state, result.error.message));
  });
}

function handleToggle(name: string, enabled: boolean): void {
  const previous = state;
  mutate(featureSet(state, name, enabled));
  void api.putFeature(name, enabled).then((result) => {
    if (!result.ok) {
      mutate(featureRejected(previous, name, result.error.message));
    }
  });
}

function redraw(): void {
  if (!dirty) return;
  dirty = false;

  const strip = byId("strip-chart") as HTMLCanvasElement;
  const thr = state.pendingThreshold ?? state.threshold;
  drawStrip(strip, stripGeometry(state.records, state.marks, thr, strip.width, strip.height));

  const fiCanvas = byId("fi-chart") as HTMLCanvasElement;
  const fi = latestFi(state);
  const indices = fi ? topFeatureIndices(fi, 3) : [];
  drawFi(fiCanvas, fiGeometry(state.records, state.featureNames, indices, fiCanvas.width, fiCanvas.height));
  const top = byId("top-features");
  top.replaceChildren(renderTopFeatures(document, topFeatures(state, 3)));

  byId("threshold-slot").replaceChildren(
    renderThresholdControl(document, state, {
      onDrag: (v) => mutate(dragThreshold(state, v)),
      onRelease: handleThresholdRelease,
    }),
  );
  byId("toggles-slot").replaceChildren(
    renderFeatureToggles(document, state, { onToggle: handleToggle }),
  );
  byId("inbox-slot").replaceChildren(
    renderEventInbox(document, state, { onLabel: handleLabel }),
  );
  byId("picker-slot").replaceChildren(
    renderFeaturePicker(document, state, (name) => {
      mutate(selectFeature(state, name));
      void refreshPdp();
    }),
  );
  if (pdpSnap) {
    byId("pdp-meta-slot").replaceChildren(renderPdpMeta(document, pdpSnap));
    const canvas = byId("pdp-chart") as HTMLCanvasElement;
    drawPdp(canvas, pdpGeometry(pdpSnap, canvas.width, canvas.height));
  }
}

async function boot(): Promise<void> {
  const snapshot = await api.snapshot();
  if (snapshot.ok) {
    const names = snapshot.value.features.map((f) => f.name);
    let next = initialState(names, snapshot.value.threshold);
    next = {
      ...next,
      features: snapshot.value.features.map((f) => ({ ...f })),
      records: snapshot.value.records,
      marks: snapshot.value.run_marks,
      events: snapshot.value.events,
    };
    mutate(next);
  }
  await Promise.all([refreshEvents(), refreshPdp()]);

  connectStream(api.base + "/stream", {
    onRecord: (record) => mutate(pushRecord(state, record)),
    onMark: (mark) => mutate(pushMark(state, mark)),
    onEvent: () => void refreshEvents(),
    onStatus: (status) => {
      byId("conn-status").textContent = status;
    },
  });

  setInterval(() => void refreshPdp(), 1000);
  const loop = () => {
    redraw();
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

void boot();
