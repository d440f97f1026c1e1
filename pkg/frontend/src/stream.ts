/** SSE stream reducer: tracks the latest state snapshot and the link health
 * without touching the DOM, so it is unit-testable with a fake clock.
 */

import { StateView } from "./types.js";

export type LinkStatus = "connecting" | "live" | "stale" | "lost";

export interface StreamState {
  link: LinkStatus;
  state: StateView | null;
  lastEventAt: number | null;
  eventsSeen: number;
}

/** The proxy heartbeats every 2 s; past this silence the view is stale. */
export const STALE_AFTER_MS = 5000;

export function initialStream(): StreamState {
  return { link: "connecting", state: null, lastEventAt: null, eventsSeen: 0 };
}

export type StreamAction =
  | { type: "state"; payload: StateView; now: number }
  | { type: "heartbeat"; now: number }
  | { type: "tick"; now: number }
  | { type: "error"; now: number };

export function reduceStream(
  prev: StreamState,
  action: StreamAction,
): StreamState {
  switch (action.type) {
    case "state":
      return {
        link: "live",
        state: action.payload,
        lastEventAt: action.now,
        eventsSeen: prev.eventsSeen + 1,
      };
    case "heartbeat":
      return { ...prev, link: "live", lastEventAt: action.now };
    case "tick": {
      if (prev.lastEventAt === null) {
        return prev;
      }
      if (action.now - prev.lastEventAt > STALE_AFTER_MS) {
        return { ...prev, link: "stale" };
      }
      return prev;
    }
    case "error":
      // keep the last snapshot for the operator, but flag the link
      return { ...prev, link: "lost" };
  }
}

export interface StreamHandle {
  close(): void;
}

/** Wire an EventSource to the reducer; `onChange` fires with every new
 * StreamState. The EventSource constructor is injectable for tests.
 */
export function openStream(
  base: string,
  onChange: (s: StreamState) => void,
  makeSource: (url: string) => EventSource = (url) => new EventSource(url),
  now: () => number = () => Date.now(),
): StreamHandle {
  let current = initialStream();
  const push = (action: StreamAction) => {
    const next = reduceStream(current, action);
    if (next !== current) {
      current = next;
      onChange(current);
    }
  };
  const source = makeSource(`${base}/api/stream`);
  source.addEventListener("state", (ev) => {
    push({ type: "state", payload: JSON.parse((ev as MessageEvent).data), now: now() });
  });
  source.addEventListener("heartbeat", () => push({ type: "heartbeat", now: now() }));
  source.onerror = () => push({ type: "error", now: now() });
  const timer = setInterval(() => push({ type: "tick", now: now() }), 1000);
  onChange(current);
  return {
    close() {
      clearInterval(timer);
      source.close();
    },
  };
}
