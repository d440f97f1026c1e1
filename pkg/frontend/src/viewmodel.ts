/** Pure projections from the proxy's state snapshot to what each panel
 * renders. Everything here is deterministic and DOM-free.
 */

import {
  EventView,
  IoSignalView,
  JOINT_LIMITS_DEG,
  JOINT_NAMES,
  MetricWindow,
  StateView,
} from "./types.js";
import { LinkStatus } from "./stream.js";

export interface JointRow {
  name: string;
  deg: number;
  /** 0..1 position within the joint's travel, for the bar display. */
  fraction: number;
  nearLimit: boolean;
}

export function jointRows(state: StateView | null): JointRow[] {
  if (!state?.joints) {
    return [];
  }
  return state.joints.deg.map((deg, i) => {
    const [lo, hi] = JOINT_LIMITS_DEG[i];
    const fraction = Math.min(1, Math.max(0, (deg - lo) / (hi - lo)));
    const margin = 0.05 * (hi - lo);
    return {
      name: JOINT_NAMES[i],
      deg,
      fraction,
      nearLimit: deg <= lo + margin || deg >= hi - margin,
    };
  });
}

export interface TcpRow {
  label: string;
  value: string;
}

export function tcpRows(state: StateView | null): TcpRow[] {
  if (!state?.tcp) {
    return [];
  }
  const [x, y, z] = state.tcp.pos;
  const quat = state.tcp.quat.map((v) => v.toFixed(4)).join(", ");
  return [
    { label: "X", value: `${x.toFixed(2)} mm` },
    { label: "Y", value: `${y.toFixed(2)} mm` },
    { label: "Z", value: `${z.toFixed(2)} mm` },
    { label: "quat", value: quat },
  ];
}

export interface IoRow extends IoSignalView {
  /** Only digital outputs are operator-writable. */
  writable: boolean;
}

export function ioRows(state: StateView | null): IoRow[] {
  if (!state?.io) {
    return [];
  }
  return [...state.io.signals]
    .sort((a, b) => a.name.localeCompare(b.name))
    .map((s) => ({ ...s, writable: s.kind === "DO" }));
}

export function describeEvent(e: EventView): string {
  const when = new Date(e.timestamp_ms).toLocaleTimeString();
  const detail = e.detail ? ` (${e.detail})` : "";
  return `${when}  ${e.kind}${detail}`;
}

export interface ConnectionSummary {
  label: string;
  tone: "ok" | "warn" | "bad";
}

export function connectionSummary(
  link: LinkStatus,
  state: StateView | null,
): ConnectionSummary {
  if (link === "connecting") {
    return { label: "connecting to proxy…", tone: "warn" };
  }
  if (link === "lost") {
    return { label: "proxy stream lost — retrying", tone: "bad" };
  }
  if (link === "stale") {
    return { label: "proxy stream stalled", tone: "bad" };
  }
  if (!state) {
    return { label: "waiting for first snapshot", tone: "warn" };
  }
  switch (state.connection) {
    case "up":
      return { label: `controller up — phase ${state.phase || "–"}`, tone: "ok" };
    case "degraded":
      return {
        label: `controller degraded: ${state.connection_reason || "unknown"}`,
        tone: "warn",
      };
    default:
      return {
        label: `controller down: ${state.connection_reason || "unknown"}`,
        tone: "bad",
      };
  }
}

export interface RefreshSeriesPoint {
  periodMs: number;
  warmup: boolean;
}

/** Keep a rolling series of refresh windows per thread, newest last. */
export function appendRefreshSample(
  series: RefreshSeriesPoint[],
  window: MetricWindow | null | undefined,
  keep = 120,
): RefreshSeriesPoint[] {
  if (!window) {
    return series;
  }
  const next = [...series, { periodMs: window.period_ms, warmup: window.warmup }];
  return next.length > keep ? next.slice(next.length - keep) : next;
}
