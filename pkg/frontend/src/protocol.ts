// Message types mirroring docs/ws_protocol.md (version 1).

export const PROTOCOL_VERSION = 1;

export interface Envelope<T = unknown> {
  v: number;
  type: string;
  tick: number;
  payload: T;
}

export interface TerrainRegion {
  polygon: [number, number][];
  class: string;
  context?: string | null;
}

export interface WorldStatic {
  terrain: TerrainRegion[];
  obstacles: [number, number][][];
  goal: [number, number];
  robot_radius: number;
  v_max: number;
  omega_max: number;
  tick_rate: number;
  scenario: string;
}

export interface PedestrianState {
  position: [number, number];
  radius: number;
}

export interface MarkerState {
  label: number;
  pixel: [number, number];
}

export interface StatePayload {
  pose: [number, number, number];
  v: number;
  omega: number;
  pedestrians: PedestrianState[];
  reference_path: [number, number][];
  markers: MarkerState[];
  mode: "teleop" | "autonomous";
  recording: boolean;
  collision: boolean;
  goal_reached: boolean;
  metrics: { ticks: number; queries: number };
}

export interface TeleopCommand {
  v: number;
  omega: number;
}

export function teleopMessage(cmd: TeleopCommand): string {
  return JSON.stringify({ type: "teleop_cmd", payload: cmd });
}

export function modeMessage(mode: "teleop" | "autonomous"): string {
  return JSON.stringify({ type: "mode", payload: { mode } });
}

export function recordStartMessage(): string {
  return JSON.stringify({ type: "record_start" });
}

export function recordStopMessage(): string {
  return JSON.stringify({ type: "record_stop" });
}
