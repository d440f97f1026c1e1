/** Shapes of the proxy's JSON payloads (/api/state and the SSE stream). */

export interface JointsView {
  deg: number[];
  seq: number;
  age_ms: number;
}

export interface TcpView {
  pos: number[];
  quat: number[];
  seq: number;
  age_ms: number;
}

export interface IoSignalView {
  name: string;
  kind: "DI" | "DO";
  value: 0 | 1;
}

export interface IoView {
  signals: IoSignalView[];
  seq: number;
}

export interface EventView {
  kind: string;
  detail: string;
  timestamp_ms: number;
  source_signals: string[];
}

export interface SpyLogView {
  seq: number;
  timestamp_ms: number;
  level: string;
  text: string;
}

export interface MetricWindow {
  period_ms: number;
  window_count: number;
  max_period_ms: number;
  ewma_period_ms: number;
  warmup: boolean;
  wall_time_s: number;
  phase: string;
}

export interface StateView {
  connection: "up" | "degraded" | "down";
  connection_reason: string;
  phase: string;
  joints: JointsView | null;
  tcp: TcpView | null;
  io: IoView | null;
  events: EventView[];
  spylog: SpyLogView[];
  metrics: Record<string, MetricWindow | null>;
}

export interface TicketReply {
  ticket: string;
  status: "pending" | "done" | "failed";
  reason?: string;
}

/** Joint limits of the arm, in degrees, mirrored from the controller. */
export const JOINT_LIMITS_DEG: ReadonlyArray<readonly [number, number]> = [
  [-165, 165],
  [-110, 110],
  [-110, 70],
  [-160, 160],
  [-120, 120],
  [-400, 400],
];

export const JOINT_NAMES = ["J1", "J2", "J3", "J4", "J5", "J6"] as const;
