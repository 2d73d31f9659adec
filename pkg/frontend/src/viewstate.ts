// Pure view-state reducer for the operator console.
//
// The console holds no truth of its own: the entire view derives from the
// ordered server messages, so replaying the same log after a reconnect
// reconstructs the identical view (covered by tests).

import {
  HelloMessage,
  LedView,
  MethodName,
  ServerMessage,
  SiteRef,
  siteKey,
} from "./types.js";

export interface SiteView extends SiteRef {
  x: number;
  y: number;
}

export interface ArrowView extends SiteRef {
  step_index: number;
  target_cnm: number;
}

export interface StepRowView {
  step_index: number;
  part_id: string;
  site_id: string;
  target_cnm: number;
  peak_cnm: number | null;
  validated: boolean;
}

export interface ConsoleViewState {
  connected: boolean;
  sessionId: string | null;
  method: MethodName | null;
  scenarioId: string | null;
  sites: SiteView[];
  knownSites: Set<string>;
  doneSites: Set<string>;           // validated -> drawn green
  appliedBySite: Map<string, number>; // last applied torque per site
  arrow: ArrowView | null;
  stepRows: StepRowView[];          // live per-step report table
  wrenchMode: string;
  targetCnm: number;
  appliedCnm: number;
  peakCnm: number;
  led: LedView;
  engagement: (SiteRef & { tip_distance_mm: number }) | null;
  trackingOk: boolean;
  tip: [number, number] | null;
  banner: string | null;            // sticky error banner, never silent-drop
  toasts: string[];
  manualLog: { part_id: string; site_id: string; torque_cnm: number }[];
  sessionOver: boolean;
  aborted: boolean;
  stepIndex: number;
  nSteps: number;
}

export function initialViewState(): ConsoleViewState {
  return {
    connected: false,
    sessionId: null,
    method: null,
    scenarioId: null,
    sites: [],
    knownSites: new Set(),
    doneSites: new Set(),
    appliedBySite: new Map(),
    arrow: null,
    stepRows: [],
    wrenchMode: "IDLE",
    targetCnm: 0,
    appliedCnm: 0,
    peakCnm: 0,
    led: { lit_segments: 0, red: false },
    engagement: null,
    trackingOk: true,
    tip: null,
    banner: null,
    toasts: [],
    manualLog: [],
    sessionOver: false,
    aborted: false,
    stepIndex: 0,
    nSteps: 0,
  };
}

export function manualPanelVisible(state: ConsoleViewState): boolean {
  // Manual wrench control belongs to the conventional method only.
  return state.method === "CONVENTIONAL";
}

function applyHello(state: ConsoleViewState, msg: HelloMessage): ConsoleViewState {
  const sites: SiteView[] = [];
  for (const part of msg.parts) {
    for (const s of part.sites) {
      sites.push({ part_id: part.part_id, site_id: s.site_id, x: s.x, y: s.y });
    }
  }
  const stepRows = msg.scenario.steps.map(([part_id, site_id, target_cnm], i) => ({
    step_index: i,
    part_id,
    site_id,
    target_cnm,
    peak_cnm: null,
    validated: false,
  }));
  return {
    ...state,
    connected: true,
    sessionId: msg.session_id,
    method: msg.method,
    scenarioId: msg.scenario.scenario_id,
    sites,
    knownSites: new Set(sites.map((s) => siteKey(s))),
    stepRows,
    nSteps: msg.scenario.steps.length,
  };
}

function withToast(state: ConsoleViewState, text: string): ConsoleViewState {
  return { ...state, toasts: [...state.toasts.slice(-4), text] };
}

function checkSite(state: ConsoleViewState, ref: SiteRef): ConsoleViewState {
  if (state.knownSites.size > 0 && !state.knownSites.has(siteKey(ref))) {
    return { ...state, banner: `unknown site ${siteKey(ref)} in guidance` };
  }
  return state;
}

function applyEvent(
  state: ConsoleViewState,
  ev: { ts_ms: number; kind: string } & Record<string, unknown>,
): ConsoleViewState {
  switch (ev.kind) {
    case "SESSION_START":
      return {
        ...state,
        sessionId: String(ev.session_id),
        method: ev.method as MethodName,
        scenarioId: String(ev.scenario_id),
        nSteps: Number(ev.n_steps),
      };
    case "GUIDANCE_SHOWN": {
      if (ev.display === "arrow") {
        const arrow: ArrowView = {
          part_id: String(ev.part_id),
          site_id: String(ev.site_id),
          step_index: Number(ev.step_index),
          target_cnm: Number(ev.target_cnm),
        };
        return { ...checkSite(state, arrow), arrow, stepIndex: arrow.step_index };
      }
      if (ev.display === "done") {
        const ref = { part_id: String(ev.part_id), site_id: String(ev.site_id) };
        const done = new Set(state.doneSites);
        done.add(siteKey(ref));
        return { ...checkSite(state, ref), doneSites: done };
      }
      if (ev.display === "nack") {
        return withToast(state, `wrench refused: ${ev.reason}`);
      }
      return state;
    }
    case "STEP_VALIDATED": {
      const idx = Number(ev.step_index);
      const stepRows = state.stepRows.map((row) =>
        row.step_index === idx
          ? { ...row, validated: true, peak_cnm: Number(ev.peak_cnm) }
          : row,
      );
      return { ...state, stepRows, stepIndex: idx + 1 };
    }
    case "TORQUE_APPLIED": {
      if (ev.part_id == null) return state;
      const ref = { part_id: String(ev.part_id), site_id: String(ev.site_id) };
      const applied = new Map(state.appliedBySite);
      applied.set(siteKey(ref), Number(ev.peak_cnm));
      return { ...checkSite(state, ref), appliedBySite: applied };
    }
    case "TRACKING_LOST":
      return { ...state, trackingOk: false };
    case "TRACKING_REDETECTED":
      return { ...state, trackingOk: true };
    case "MANUAL_LOG_ENTRY":
      return {
        ...state,
        manualLog: [
          ...state.manualLog,
          {
            part_id: String(ev.part_id),
            site_id: String(ev.site_id),
            torque_cnm: Number(ev.torque_cnm),
          },
        ],
      };
    case "MANUAL_SET":
      if (ev.sent === false) {
        return withToast(state, `target ${ev.target_cnm} cNm refused`);
      }
      return state;
    case "SESSION_END":
      return { ...state, sessionOver: true, arrow: null };
    case "SESSION_ABORTED":
      return {
        ...state,
        sessionOver: true,
        aborted: true,
        arrow: null,
        banner: `session aborted: ${ev.reason}`,
      };
    default:
      return state;
  }
}

export function applyServerMessage(
  state: ConsoleViewState,
  msg: ServerMessage,
): ConsoleViewState {
  switch (msg.type) {
    case "hello":
      return applyHello(state, msg);
    case "event":
      return applyEvent(state, msg.event);
    case "state":
      return {
        ...state,
        wrenchMode: msg.wrench.mode,
        targetCnm: msg.wrench.target_cnm,
        appliedCnm: msg.wrench.applied_cnm,
        peakCnm: msg.wrench.peak_cnm,
        led: msg.wrench.led,
        engagement: msg.engagement,
        trackingOk: msg.tracking_ok,
        tip: msg.tip ? [msg.tip[0], msg.tip[1]] : state.tip,
      };
    case "error":
      return { ...state, banner: msg.reason };
    default:
      return state;
  }
}

export function replay(messages: ServerMessage[]): ConsoleViewState {
  let state = initialViewState();
  for (const msg of messages) {
    state = applyServerMessage(state, msg);
  }
  return state;
}
