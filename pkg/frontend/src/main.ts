/** Operator console: seven panels over the proxy's SSE stream and command
 * endpoint. All logic lives in the imported pure modules; this file only
 * wires them to the DOM.
 */

import {
  buildDo,
  buildJog,
  buildLinear,
  buildPointer,
  parseNumbers,
  sendCommand,
  waitTicket,
} from "./commands.js";
import { niceCeiling, polylinePoints } from "./chart.js";
import { openStream, StreamState } from "./stream.js";
import {
  appendRefreshSample,
  connectionSummary,
  describeEvent,
  ioRows,
  jointRows,
  RefreshSeriesPoint,
  tcpRows,
} from "./viewmodel.js";

const BASE = "";
const THREADS = ["joints", "tcp", "io"] as const;
const THREAD_COLORS: Record<string, string> = {
  joints: "#4fc3f7",
  tcp: "#aed581",
  io: "#ffb74d",
};

document.querySelector<HTMLDivElement>("#app")!.innerHTML = `
  <header>
    <h1>workcell console</h1>
    <span id="conn" class="badge warn">connecting…</span>
  </header>
  <main class="grid">
    <section class="panel" id="panel-pointer">
      <h2>program</h2>
      <div class="row">
        <button id="btn-start">start</button>
        <button id="btn-stop">stop</button>
        <button id="btn-reset">reset pointer</button>
      </div>
      <div id="pointer-status" class="status"></div>
    </section>

    <section class="panel" id="panel-joints">
      <h2>joints &amp; TCP</h2>
      <div id="joint-bars"></div>
      <table id="tcp-table"></table>
    </section>

    <section class="panel" id="panel-jog">
      <h2>joint jog</h2>
      <label>targets (deg) <input id="jog-values" value="0,0,0,0,0,0"></label>
      <div class="row">
        <label><input type="radio" name="jog-mode" value="absolute" checked> absolute</label>
        <label><input type="radio" name="jog-mode" value="relative"> relative</label>
        <button id="btn-jog">jog</button>
      </div>
      <div id="jog-status" class="status"></div>
    </section>

    <section class="panel" id="panel-linear">
      <h2>linear move</h2>
      <label>delta (mm) <input id="linear-values" value="100,0,0"></label>
      <div class="row"><button id="btn-linear">move</button></div>
      <div id="linear-status" class="status"></div>
    </section>

    <section class="panel" id="panel-refresh">
      <h2>refresh periods</h2>
      <svg id="refresh-chart" viewBox="0 0 300 90" preserveAspectRatio="none"></svg>
      <div id="refresh-legend" class="legend"></div>
    </section>

    <section class="panel" id="panel-events">
      <h2>events</h2>
      <ul id="event-list"></ul>
    </section>

    <section class="panel" id="panel-io">
      <h2>I/O &amp; spy log</h2>
      <table id="io-table"></table>
      <pre id="spylog"></pre>
    </section>
  </main>
`;

const $ = <T extends HTMLElement>(sel: string) =>
  document.querySelector<T>(sel)!;

function setStatus(el: HTMLElement, text: string, bad = false) {
  el.textContent = text;
  el.classList.toggle("bad", bad);
}

async function runCommand(statusEl: HTMLElement, body: ReturnType<typeof buildPointer>) {
  try {
    setStatus(statusEl, "sending…");
    const reply = await sendCommand(BASE, body);
    if (reply.status === "pending") {
      setStatus(statusEl, `ticket ${reply.ticket.slice(0, 8)} pending…`);
      const done = await waitTicket(BASE, reply.ticket);
      setStatus(statusEl, `ticket ${done.status}${done.reason ? `: ${done.reason}` : ""}`,
        done.status !== "done");
    } else {
      setStatus(statusEl, reply.status);
    }
  } catch (err) {
    setStatus(statusEl, String(err instanceof Error ? err.message : err), true);
  }
}

// -- panel 1: program pointer -------------------------------------------------

$("#btn-start").onclick = () =>
  runCommand($("#pointer-status"), buildPointer("start"));
$("#btn-stop").onclick = () =>
  runCommand($("#pointer-status"), buildPointer("stop"));
$("#btn-reset").onclick = () =>
  runCommand($("#pointer-status"), buildPointer("reset"));

// -- panel 3: joint jog ----------------------------------------------------------

$("#btn-jog").onclick = () => {
  const statusEl = $("#jog-status");
  try {
    const joints = parseNumbers($<HTMLInputElement>("#jog-values").value, 6);
    const mode = document.querySelector<HTMLInputElement>(
      'input[name="jog-mode"]:checked',
    )!.value as "absolute" | "relative";
    void runCommand(statusEl, buildJog(joints, mode));
  } catch (err) {
    setStatus(statusEl, String(err instanceof Error ? err.message : err), true);
  }
};

// -- panel 4: linear move ----------------------------------------------------------

$("#btn-linear").onclick = () => {
  const statusEl = $("#linear-status");
  try {
    const delta = parseNumbers($<HTMLInputElement>("#linear-values").value, 3);
    void runCommand(statusEl, buildLinear(delta));
  } catch (err) {
    setStatus(statusEl, String(err instanceof Error ? err.message : err), true);
  }
};

// -- panels 2, 5, 6, 7: rendered from the stream -------------------------------------

const series: Record<string, RefreshSeriesPoint[]> = {
  joints: [],
  tcp: [],
  io: [],
};
let lastWallTime: Record<string, number> = {};

function renderJoints(s: StreamState) {
  $("#joint-bars").innerHTML = jointRows(s.state)
    .map(
      (r) => `
      <div class="joint ${r.nearLimit ? "near-limit" : ""}">
        <span class="jname">${r.name}</span>
        <div class="bar"><div class="fill" style="width:${(r.fraction * 100).toFixed(1)}%"></div></div>
        <span class="jval">${r.deg.toFixed(2)}°</span>
      </div>`,
    )
    .join("");
  $("#tcp-table").innerHTML = tcpRows(s.state)
    .map((r) => `<tr><th>${r.label}</th><td>${r.value}</td></tr>`)
    .join("");
}

function renderEvents(s: StreamState) {
  const events = s.state?.events ?? [];
  $("#event-list").innerHTML = events
    .slice(-30)
    .reverse()
    .map((e) => `<li class="${e.kind === "IntegrityWarning" ? "bad" : ""}">${describeEvent(e)}</li>`)
    .join("");
}

function renderIo(s: StreamState) {
  $("#io-table").innerHTML = ioRows(s.state)
    .map(
      (r) => `
      <tr>
        <th>${r.name}</th>
        <td class="${r.value ? "on" : "off"}">${r.value}</td>
        <td>${
          r.writable
            ? `<button class="do-toggle" data-name="${r.name}" data-value="${r.value ? 0 : 1}">set ${r.value ? 0 : 1}</button>`
            : "input"
        }</td>
      </tr>`,
    )
    .join("");
  document.querySelectorAll<HTMLButtonElement>(".do-toggle").forEach((btn) => {
    btn.onclick = () =>
      runCommand(
        $("#pointer-status"),
        buildDo(btn.dataset.name!, Number(btn.dataset.value) as 0 | 1),
      );
  });
  const log = s.state?.spylog ?? [];
  $("#spylog").textContent = log
    .slice(-12)
    .map((e) => `[${e.level}] ${e.text}`)
    .join("\n");
}

function renderChart(s: StreamState) {
  const metrics = s.state?.metrics ?? {};
  for (const name of THREADS) {
    const w = metrics[name];
    // append only when a new window closed (wall_time_s moved)
    if (w && w.wall_time_s !== lastWallTime[name]) {
      lastWallTime[name] = w.wall_time_s;
      series[name] = appendRefreshSample(series[name], w);
    }
  }
  const all = THREADS.flatMap((n) => series[n].map((p) => p.periodMs));
  const maxY = niceCeiling(all);
  const chart = $("#refresh-chart");
  chart.innerHTML = THREADS.map((name) => {
    const pts = polylinePoints(
      series[name].map((p) => p.periodMs),
      { width: 300, height: 90, maxY },
    );
    return `<polyline fill="none" stroke="${THREAD_COLORS[name]}" stroke-width="1.5" points="${pts}"/>`;
  }).join("");
  $("#refresh-legend").innerHTML = THREADS.map((name) => {
    const last = series[name].at(-1);
    return `<span style="color:${THREAD_COLORS[name]}">${name}: ${
      last ? last.periodMs.toFixed(1) : "–"
    } ms</span>`;
  }).join(" · ") + ` <span class="axis">y-max ${maxY} ms</span>`;
}

openStream(BASE, (s) => {
  const summary = connectionSummary(s.link, s.state);
  const badge = $("#conn");
  badge.textContent = summary.label;
  badge.className = `badge ${summary.tone}`;
  renderJoints(s);
  renderEvents(s);
  renderIo(s);
  renderChart(s);
});
