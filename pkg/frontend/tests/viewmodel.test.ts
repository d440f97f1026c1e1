import { describe, expect, it } from "vitest";

import {
  appendRefreshSample,
  connectionSummary,
  describeEvent,
  ioRows,
  jointRows,
  tcpRows,
} from "../src/viewmodel.js";
import { MetricWindow, StateView } from "../src/types.js";

function snapshot(overrides: Partial<StateView> = {}): StateView {
  return {
    connection: "up",
    connection_reason: "",
    phase: "PICK",
    joints: { deg: [0, 55, -20, 0, 40, 0], seq: 9, age_ms: 3 },
    tcp: { pos: [374, 0, 630], quat: [0.70711, 0, 0.70711, 0], seq: 9, age_ms: 3 },
    io: {
      signals: [
        { name: "DO_GRIP", kind: "DO", value: 1 },
        { name: "DI_IR", kind: "DI", value: 0 },
        { name: "DO_3", kind: "DO", value: 0 },
      ],
      seq: 9,
    },
    events: [],
    spylog: [],
    metrics: {},
    ...overrides,
  };
}

describe("jointRows", () => {
  it("maps degrees to bar fractions within each joint's travel", () => {
    const rows = jointRows(snapshot());
    expect(rows).toHaveLength(6);
    expect(rows[0].name).toBe("J1");
    // J1 at 0 deg sits mid-travel of -165..165
    expect(rows[0].fraction).toBeCloseTo(0.5, 10);
    // J3 at -20 deg in -110..70: (−20+110)/180
    expect(rows[2].fraction).toBeCloseTo(90 / 180, 10);
    expect(rows.every((r) => !r.nearLimit)).toBe(true);
  });

  it("flags joints within 5% of a limit", () => {
    const rows = jointRows(
      snapshot({ joints: { deg: [160, 0, 65, 0, 0, -395], seq: 1, age_ms: 0 } }),
    );
    expect(rows[0].nearLimit).toBe(true); // 160 of 165
    expect(rows[2].nearLimit).toBe(true); // 65 of 70
    expect(rows[5].nearLimit).toBe(true); // -395 of -400
    expect(rows[1].nearLimit).toBe(false);
  });

  it("clamps out-of-range values into the bar", () => {
    const rows = jointRows(
      snapshot({ joints: { deg: [999, 0, 0, 0, 0, 0], seq: 1, age_ms: 0 } }),
    );
    expect(rows[0].fraction).toBe(1);
  });

  it("is empty without joints", () => {
    expect(jointRows(null)).toEqual([]);
    expect(jointRows(snapshot({ joints: null }))).toEqual([]);
  });
});

describe("tcpRows", () => {
  it("formats position and quaternion", () => {
    const rows = tcpRows(snapshot());
    expect(rows.map((r) => r.label)).toEqual(["X", "Y", "Z", "quat"]);
    expect(rows[0].value).toBe("374.00 mm");
    expect(rows[3].value).toBe("0.7071, 0.0000, 0.7071, 0.0000");
  });
});

describe("ioRows", () => {
  it("sorts by name and marks only outputs writable", () => {
    const rows = ioRows(snapshot());
    expect(rows.map((r) => r.name)).toEqual(["DI_IR", "DO_3", "DO_GRIP"]);
    expect(rows.find((r) => r.name === "DI_IR")?.writable).toBe(false);
    expect(rows.find((r) => r.name === "DO_GRIP")?.writable).toBe(true);
  });
});

describe("describeEvent", () => {
  it("includes the detail only when present", () => {
    const base = { timestamp_ms: 0, source_signals: ["DO_3"] };
    expect(
      describeEvent({ ...base, kind: "ShapeRecognized", detail: "square" }),
    ).toMatch(/ShapeRecognized \(square\)$/);
    expect(describeEvent({ ...base, kind: "PieceAtB", detail: "" })).toMatch(
      /PieceAtB$/,
    );
  });
});

describe("connectionSummary", () => {
  it("ranks link problems above controller state", () => {
    expect(connectionSummary("lost", snapshot()).tone).toBe("bad");
    expect(connectionSummary("stale", snapshot()).tone).toBe("bad");
    expect(connectionSummary("connecting", null).tone).toBe("warn");
  });

  it("reflects the controller rollup when the link is live", () => {
    expect(connectionSummary("live", snapshot()).tone).toBe("ok");
    expect(connectionSummary("live", snapshot()).label).toContain("PICK");
    const degraded = snapshot({
      connection: "degraded",
      connection_reason: "timeout",
    });
    expect(connectionSummary("live", degraded)).toEqual({
      label: "controller degraded: timeout",
      tone: "warn",
    });
    const down = snapshot({ connection: "down", connection_reason: "" });
    expect(connectionSummary("live", down).tone).toBe("bad");
  });
});

describe("appendRefreshSample", () => {
  const window = (period: number): MetricWindow => ({
    period_ms: period,
    window_count: Math.round(1000 / period),
    max_period_ms: period,
    ewma_period_ms: period,
    warmup: false,
    wall_time_s: 0,
    phase: "",
  });

  it("appends and trims to the keep budget", () => {
    let series = appendRefreshSample([], window(2.5));
    series = appendRefreshSample(series, window(3.0));
    expect(series.map((p) => p.periodMs)).toEqual([2.5, 3.0]);
    for (let i = 0; i < 200; i++) {
      series = appendRefreshSample(series, window(i), 120);
    }
    expect(series).toHaveLength(120);
    expect(series.at(-1)?.periodMs).toBe(199);
  });

  it("ignores missing windows", () => {
    const series = [{ periodMs: 2, warmup: false }];
    expect(appendRefreshSample(series, null)).toBe(series);
    expect(appendRefreshSample(series, undefined)).toBe(series);
  });
});
