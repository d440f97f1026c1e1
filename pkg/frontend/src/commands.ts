/** Command builders and the ticket round trip. Builders are pure and throw
 * on invalid input so the UI can reject bad values before any request.
 */

import { JOINT_LIMITS_DEG, TicketReply } from "./types.js";

export type PointerAction = "reset" | "start" | "stop";

export interface CommandBody {
  kind: "pointer" | "do" | "jog" | "linear";
  [key: string]: unknown;
}

export function buildPointer(action: PointerAction): CommandBody {
  return { kind: "pointer", action };
}

export function buildDo(name: string, value: 0 | 1): CommandBody {
  if (!/^DO_[A-Z0-9_]+$/.test(name)) {
    throw new Error(`not a digital output name: ${name}`);
  }
  return { kind: "do", name, value };
}

export function buildJog(
  jointsDeg: number[],
  mode: "absolute" | "relative" = "absolute",
): CommandBody {
  if (jointsDeg.length !== 6 || jointsDeg.some((v) => !Number.isFinite(v))) {
    throw new Error("jog needs 6 finite joint values (deg)");
  }
  if (mode === "absolute") {
    jointsDeg.forEach((v, i) => {
      const [lo, hi] = JOINT_LIMITS_DEG[i];
      if (v < lo || v > hi) {
        throw new Error(`J${i + 1} target ${v} deg outside [${lo}, ${hi}]`);
      }
    });
  }
  return { kind: "jog", joints_deg: jointsDeg, mode };
}

export function buildLinear(deltaMm: number[]): CommandBody {
  if (deltaMm.length !== 3 || deltaMm.some((v) => !Number.isFinite(v))) {
    throw new Error("linear move needs dx,dy,dz in mm");
  }
  const norm = Math.hypot(deltaMm[0], deltaMm[1], deltaMm[2]);
  if (norm === 0) {
    throw new Error("linear move must be non-zero");
  }
  if (norm > 300) {
    throw new Error(`step ${norm.toFixed(1)} mm exceeds the 300 mm limit`);
  }
  return { kind: "linear", delta_mm: deltaMm };
}

/** Parse a comma-separated numeric field ("10, 0, 0") into n numbers. */
export function parseNumbers(text: string, n: number): number[] {
  const parts = text.split(",").map((p) => Number(p.trim()));
  if (parts.length !== n || parts.some((v) => !Number.isFinite(v))) {
    throw new Error(`expected ${n} comma-separated numbers`);
  }
  return parts;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export async function sendCommand(
  base: string,
  body: CommandBody,
  fetchImpl: FetchLike = fetch,
): Promise<TicketReply> {
  const resp = await fetchImpl(`${base}/api/command`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  const payload = await resp.json();
  if (!resp.ok) {
    throw new Error(payload.error ?? `HTTP ${resp.status}`);
  }
  return payload as TicketReply;
}

/** Poll a ticket until it leaves "pending" or the deadline passes. */
export async function waitTicket(
  base: string,
  ticketId: string,
  opts: {
    fetchImpl?: FetchLike;
    intervalMs?: number;
    timeoutMs?: number;
    sleep?: (ms: number) => Promise<void>;
  } = {},
): Promise<TicketReply> {
  const fetchImpl = opts.fetchImpl ?? fetch;
  const intervalMs = opts.intervalMs ?? 150;
  const timeoutMs = opts.timeoutMs ?? 30000;
  const sleep =
    opts.sleep ?? ((ms: number) => new Promise((r) => setTimeout(r, ms)));
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const resp = await fetchImpl(`${base}/api/ticket/${ticketId}`);
    if (!resp.ok) {
      throw new Error(`ticket lookup failed: HTTP ${resp.status}`);
    }
    const ticket = (await resp.json()) as TicketReply;
    if (ticket.status !== "pending") {
      return ticket;
    }
    if (Date.now() >= deadline) {
      throw new Error(`ticket ${ticketId} still pending after ${timeoutMs} ms`);
    }
    await sleep(intervalMs);
  }
}
