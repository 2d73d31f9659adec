// Console channel message shapes. The server is the single source of truth:
// every marker, torque and validation shown in the UI comes from these.

export type MethodName = "AR_GUIDED" | "CONVENTIONAL";

export interface SiteRef {
  part_id: string;
  site_id: string;
}

export interface HelloPart {
  part_id: string;
  sites: { site_id: string; x: number; y: number }[];
}

export interface HelloMessage {
  type: "hello";
  session_id: string;
  method: MethodName;
  engage_threshold: number;
  scenario: {
    scenario_id: string;
    steps: [string, string, number][]; // part_id, site_id, target_cnm
  };
  parts: HelloPart[];
}

export interface SessionEventMessage {
  type: "event";
  event: { ts_ms: number; kind: string } & Record<string, unknown>;
}

export interface LedView {
  lit_segments: number;
  red: boolean;
}

export interface StateMessage {
  type: "state";
  wrench: {
    mode: "IDLE" | "ARMED" | "TIGHTENING" | "REACHED";
    target_cnm: number;
    applied_cnm: number;
    peak_cnm: number;
    led: LedView;
  };
  engagement: (SiteRef & { tip_distance_mm: number }) | null;
  tracking_ok: boolean;
  tip: [number, number, number] | null;
  step_index: number;
  active: boolean;
}

export interface ErrorMessage {
  type: "error";
  reason: string;
}

export type ServerMessage =
  | HelloMessage
  | SessionEventMessage
  | StateMessage
  | ErrorMessage;

export type OperatorAction =
  | { type: "pose"; x: number; y: number }
  | { type: "press" }
  | { type: "release" }
  | { type: "manual_set"; target_cnm: number }
  | { type: "manual_log"; part_id: string; site_id: string; torque_cnm: number }
  | { type: "done" };

export function siteKey(ref: SiteRef): string {
  return `${ref.part_id}/${ref.site_id}`;
}
