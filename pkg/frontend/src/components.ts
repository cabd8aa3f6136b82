// DOM components. Each builds a detached element from the current state and
// payloads verbatim; main.ts swaps them into the page.

import type { EventPayload, PdpSnapshot, Verdict } from "./types.js";
import type { ViewState } from "./state.js";
import { effectiveThreshold } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export interface ThresholdActions {
  onDrag(value: number): void;
  onRelease(value: number): void;
}

/** Slider mirroring the draggable threshold line; PUTs on release only. */
export function renderThresholdControl(
  doc: Document,
  state: ViewState,
  actions: ThresholdActions,
): HTMLElement {
  const wrap = el(doc, "div", "threshold-control");
  const label = el(doc, "label", "threshold-label",
    `threshold ${effectiveThreshold(state).toFixed(3)}`);
  label.htmlFor = "threshold-slider";
  const slider = el(doc, "input", "threshold-slider");
  slider.id = "threshold-slider";
  slider.type = "range";
  slider.min = "0.001";
  slider.max = "0.999";
  slider.step = "0.001";
  slider.value = String(effectiveThreshold(state));
  slider.addEventListener("input", () => actions.onDrag(Number(slider.value)));
  slider.addEventListener("change", () => actions.onRelease(Number(slider.value)));
  wrap.append(label, slider);
  if (state.suggestion !== null) {
    const hint = el(doc, "button", "suggestion-hint",
      `apply suggested ${state.suggestion.toFixed(3)}`);
    hint.addEventListener("click", () => actions.onRelease(state.suggestion as number));
    wrap.append(hint);
  }
  if (state.notice) {
    wrap.append(el(doc, "div", "notice", state.notice));
  }
  return wrap;
}

export interface ToggleActions {
  onToggle(name: string, enabled: boolean): void;
}

export function renderFeatureToggles(
  doc: Document,
  state: ViewState,
  actions: ToggleActions,
): HTMLElement {
  const wrap = el(doc, "div", "feature-toggles");
  for (const feature of state.features) {
    const row = el(doc, "label", "toggle-row");
    const box = el(doc, "input");
    box.type = "checkbox";
    box.checked = feature.enabled;
    box.dataset.feature = feature.name;
    box.addEventListener("change", () => actions.onToggle(feature.name, box.checked));
    row.append(box, el(doc, "span", "toggle-name", feature.name));
    wrap.append(row);
  }
  return wrap;
}

export interface InboxActions {
  onLabel(event: EventPayload, verdict: Verdict): void;
}

export function renderEventInbox(
  doc: Document,
  state: ViewState,
  actions: InboxActions,
): HTMLElement {
  const wrap = el(doc, "div", "event-inbox");
  wrap.append(el(doc, "h3", undefined, `events (${state.events.length})`));
  if (state.suggestion !== null) {
    wrap.append(el(doc, "div", "suggestion",
      `suggested threshold: ${state.suggestion.toFixed(3)}`));
  }
  const list = el(doc, "ul", "event-list");
  for (const event of [...state.events].reverse()) {
    const item = el(doc, "li", event.label ? "event labeled" : "event");
    item.dataset.eventId = String(event.event_id);
    item.append(
      el(doc, "span", "event-range", `#${event.event_id} [${event.from}..${event.to}]`),
      el(doc, "span", "event-peak", `peak ${event.peak_score.toFixed(4)} @ ${event.peak_id}`),
      el(doc, "span", "event-features", event.top_features.join(", ")),
    );
    if (event.label) {
      item.append(el(doc, "span", `verdict verdict-${event.label}`, event.label));
    } else {
      const confirm = el(doc, "button", "confirm-fault", "confirm fault");
      confirm.addEventListener("click", () => actions.onLabel(event, "confirmed_fault"));
      const normal = el(doc, "button", "mark-normal", "mark normal");
      normal.addEventListener("click", () => actions.onLabel(event, "normal"));
      item.append(confirm, normal);
    }
    list.append(item);
  }
  wrap.append(list);
  return wrap;
}

/** Non-canvas part of a PDP panel: title, fi readout, ring legend. */
export function renderPdpMeta(doc: Document, snap: PdpSnapshot): HTMLElement {
  const wrap = el(doc, "div", "pdp-meta");
  wrap.dataset.feature = snap.feature;
  wrap.append(
    el(doc, "h4", "pdp-title", snap.feature),
    el(doc, "span", "pdp-fi", `fi ${snap.fi}`),
    el(doc, "span", "pdp-range",
      `grid [${snap.grid[0]}, ${snap.grid[snap.grid.length - 1]}]`),
    el(doc, "span", "pdp-ice-count", `${snap.ice.length} recent ICE`),
  );
  return wrap;
}

export function renderFeaturePicker(
  doc: Document,
  state: ViewState,
  onSelect: (name: string) => void,
): HTMLElement {
  const select = el(doc, "select", "feature-picker");
  for (const name of state.featureNames) {
    const option = el(doc, "option", undefined, name);
    option.value = name;
    option.selected = name === state.selectedFeature;
    select.append(option);
  }
  select.addEventListener("change", () => onSelect(select.value));
  return select;
}

export function renderTopFeatures(
  doc: Document,
  entries: { name: string; fi: number }[],
): HTMLElement {
  const wrap = el(doc, "div", "top-features");
  for (const entry of entries) {
    wrap.append(el(doc, "span", "top-feature", `${entry.name} (${entry.fi.toFixed(4)})`));
  }
  return wrap;
}
