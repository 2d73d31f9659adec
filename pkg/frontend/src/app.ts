// Operator console: 2D bench schematic with a draggable virtual wrench, a
// press-and-hold torque control, live guidance overlays, the LED bar, the
// manual panel (conventional mode) and the end-of-session report view.
//
// All truth comes from the server over /ws; this file only renders state and
// forwards operator actions.

import { boundsOf, fitBounds, Mapping, screenToWorld, worldToScreen } from "./mapping.js";
import { pointsAttr, radarGeometry, radarPolygon, RadarScores, scoresToValues } from "./radar.js";
import { OperatorAction, ServerMessage, siteKey } from "./types.js";
import {
  applyServerMessage,
  ConsoleViewState,
  initialViewState,
  manualPanelVisible,
} from "./viewstate.js";

const SITE_R = 9;

let state: ConsoleViewState = initialViewState();
let ws: WebSocket | null = null;
let mapping: Mapping | null = null;
let dragging = false;
let localTip: [number, number] | null = null;
let pressHeld = false;
let lastPoseSent = 0;

const canvas = document.getElementById("bench") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

function $(id: string): HTMLElement {
  return document.getElementById(id)!;
}

function send(action: OperatorAction): void {
  if (ws && ws.readyState === WebSocket.OPEN) {
    ws.send(JSON.stringify(action));
  }
}

function toast(text: string): void {
  state = { ...state, toasts: [...state.toasts.slice(-4), text] };
}

function connect(): void {
  const url = window.location.origin.replace(/^http/, "ws") + "/ws";
  ws = new WebSocket(url);
  ws.onmessage = (raw) => {
    const msg = JSON.parse(raw.data) as ServerMessage;
    state = applyServerMessage(state, msg);
    if (msg.type === "hello") {
      mapping = fitBounds(boundsOf(state.sites), canvas.width, canvas.height);
    }
  };
  ws.onclose = () => {
    state = { ...state, connected: false };
    setTimeout(connect, 1500); // reconnect; the server replays the log
  };
}

// -- input -------------------------------------------------------------------

function canvasWorld(ev: MouseEvent): [number, number] | null {
  if (!mapping) return null;
  const rect = canvas.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const py = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  return screenToWorld(mapping, px, py);
}

canvas.addEventListener("mousedown", (ev) => {
  dragging = true;
  const w = canvasWorld(ev);
  if (w) {
    localTip = w;
    send({ type: "pose", x: w[0], y: w[1] });
  }
});

canvas.addEventListener("mousemove", (ev) => {
  if (!dragging) return;
  const w = canvasWorld(ev);
  if (!w) return;
  localTip = w;
  const now = performance.now();
  if (now - lastPoseSent > 33) {
    lastPoseSent = now;
    send({ type: "pose", x: w[0], y: w[1] });
  }
});

window.addEventListener("mouseup", () => {
  dragging = false;
});

function setPress(held: boolean): void {
  if (held === pressHeld) return;
  pressHeld = held;
  send({ type: held ? "press" : "release" });
}

const pullBtn = $("pull") as HTMLButtonElement;
pullBtn.addEventListener("mousedown", () => setPress(true));
pullBtn.addEventListener("mouseup", () => setPress(false));
pullBtn.addEventListener("mouseleave", () => setPress(false));
window.addEventListener("keydown", (ev) => {
  if (ev.code === "Space" && !ev.repeat) {
    ev.preventDefault();
    setPress(true);
  }
});
window.addEventListener("keyup", (ev) => {
  if (ev.code === "Space") setPress(false);
});

$("manual-set-btn").addEventListener("click", () => {
  if (!manualPanelVisible(state)) {
    toast("manual control is disabled in guided mode");
    return;
  }
  const value = Number(($("manual-target") as HTMLInputElement).value);
  send({ type: "manual_set", target_cnm: Math.round(value) });
});

$("manual-log-btn").addEventListener("click", () => {
  if (!manualPanelVisible(state)) {
    toast("the log form is disabled in guided mode");
    return;
  }
  const part = ($("log-part") as HTMLInputElement).value.trim();
  const site = ($("log-site") as HTMLInputElement).value.trim();
  const torque = Number(($("log-torque") as HTMLInputElement).value);
  if (!part || !site || !Number.isFinite(torque)) {
    toast("fill in part, site and torque first");
    return;
  }
  send({ type: "manual_log", part_id: part, site_id: site,
         torque_cnm: Math.round(torque) });
});

$("done-btn").addEventListener("click", () => {
  if (!manualPanelVisible(state)) {
    toast("guided sessions finish on their own");
    return;
  }
  send({ type: "done" });
});

($("radar-file") as HTMLInputElement).addEventListener("change", async (ev) => {
  const input = ev.target as HTMLInputElement;
  const file = input.files && input.files[0];
  if (!file) return;
  try {
    renderRadar(JSON.parse(await file.text()));
  } catch {
    toast("that file is not radar JSON");
  }
});

// -- schematic rendering -------------------------------------------------

function drawSite(x: number, y: number, fill: string, stroke: string): void {
  ctx.beginPath();
  ctx.arc(x, y, SITE_R, 0, 2 * Math.PI);
  ctx.fillStyle = fill;
  ctx.fill();
  ctx.lineWidth = 1.5;
  ctx.strokeStyle = stroke;
  ctx.stroke();
}

function drawArrow(x: number, y: number, pulse: number): void {
  ctx.beginPath();
  ctx.arc(x, y, SITE_R + 5 + 3 * Math.sin(pulse / 180), 0, 2 * Math.PI);
  ctx.strokeStyle = "#ff9f1c";
  ctx.lineWidth = 3;
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(x, y - 42);
  ctx.lineTo(x - 8, y - 26);
  ctx.lineTo(x + 8, y - 26);
  ctx.closePath();
  ctx.fillStyle = "#ff9f1c";
  ctx.fill();
}

function drawWrench(x: number, y: number, dim: boolean): void {
  ctx.save();
  ctx.globalAlpha = dim ? 0.35 : 1.0;
  ctx.beginPath();
  ctx.arc(x, y, 14, 0, 2 * Math.PI);
  ctx.strokeStyle = "#4cc9f0";
  ctx.lineWidth = 3;
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(x - 20, y);
  ctx.lineTo(x + 20, y);
  ctx.moveTo(x, y - 20);
  ctx.lineTo(x, y + 20);
  ctx.lineWidth = 1;
  ctx.stroke();
  ctx.restore();
}

function render(tMs: number): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!mapping) {
    requestAnimationFrame(render);
    return;
  }
  const arrowKey = state.arrow ? siteKey(state.arrow) : null;
  for (const site of state.sites) {
    const [x, y] = worldToScreen(mapping, site.x, site.y);
    const key = siteKey(site);
    if (state.doneSites.has(key)) {
      drawSite(x, y, "#2a9d3a", "#1a6b26"); // validated: filled green
    } else {
      drawSite(x, y, "#2b2d42", "#8d99ae");
    }
    const applied = state.appliedBySite.get(key);
    if (applied !== undefined) {
      ctx.fillStyle = "#cdd7e0";
      ctx.font = "10px monospace";
      ctx.fillText(`${applied}`, x + SITE_R + 2, y - SITE_R);
    }
  }
  if (state.arrow) {
    const site = state.sites.find((s) => siteKey(s) === arrowKey);
    if (site) {
      const [x, y] = worldToScreen(mapping, site.x, site.y);
      drawArrow(x, y, tMs);
      ctx.fillStyle = "#ffd166";
      ctx.font = "12px monospace";
      ctx.fillText(
        `target ${state.arrow.target_cnm} cNm / applied ${state.appliedCnm} cNm`,
        x + 14, y + 24,
      );
    }
  }
  const tip = dragging && localTip ? localTip : state.tip ?? localTip;
  if (tip) {
    const [x, y] = worldToScreen(mapping, tip[0], tip[1]);
    drawWrench(x, y, !state.trackingOk);
  }
  renderPanels();
  requestAnimationFrame(render);
}

// -- panels ----------------------------------------------------------------

function renderLed(): void {
  const led = $("led");
  const cells: string[] = [];
  for (let i = 0; i < 10; i++) {
    const lit = i < state.led.lit_segments;
    const cls = state.led.red ? "seg red" : lit ? "seg lit" : "seg";
    cells.push(`<div class="${lit || state.led.red ? cls : "seg"}"></div>`);
  }
  led.innerHTML = cells.join("");
}

function renderPanels(): void {
  $("mode-banner").textContent = state.method
    ? (state.method === "AR_GUIDED" ? "GUIDED MODE" : "CONVENTIONAL MODE")
    : "connecting...";
  $("mode-banner").className = state.method === "AR_GUIDED" ? "banner ar" : "banner conv";
  $("status").textContent =
    `wrench ${state.wrenchMode}  target ${state.targetCnm}  ` +
    `applied ${state.appliedCnm}  peak ${state.peakCnm}` +
    (state.engagement ? `  on ${siteKey(state.engagement)}` : "") +
    (state.trackingOk ? "" : "  [tracking lost]");
  $("tracking-badge").style.display = state.trackingOk ? "none" : "inline-block";
  $("step-counter").textContent =
    state.nSteps ? `step ${Math.min(state.stepIndex + 1, state.nSteps)} / ${state.nSteps}` : "";
  renderLed();
  ($("manual-panel") as HTMLElement).style.display =
    manualPanelVisible(state) ? "block" : "none";
  $("error-banner").textContent = state.banner ?? "";
  $("error-banner").style.display = state.banner ? "block" : "none";
  $("toasts").innerHTML = state.toasts.map((t) => `<div class="toast">${t}</div>`).join("");
  if (state.sessionOver) {
    renderReport();
  }
}

function renderReport(): void {
  const panel = $("report-panel");
  panel.style.display = "block";
  const head = state.aborted
    ? `<h3>session aborted - partial report</h3>`
    : `<h3>tightening report</h3>`;
  if (state.stepRows.length === 0) {
    panel.innerHTML = `${head}<p class="empty">no steps in this session</p>`;
    return;
  }
  const rows = state.stepRows.map((r) => {
    const cls = r.validated ? "ok" : "missing";
    const peak = r.peak_cnm ?? state.appliedBySite.get(`${r.part_id}/${r.site_id}`) ?? 0;
    return `<tr class="${cls}"><td>${r.step_index + 1}</td><td>${r.part_id}</td>` +
      `<td>${r.site_id}</td><td>${r.target_cnm}</td><td>${peak}</td>` +
      `<td>${r.validated ? "yes" : "no"}</td></tr>`;
  });
  panel.innerHTML = `${head}
    <table><thead><tr><th>#</th><th>part</th><th>site</th>
    <th>target cNm</th><th>peak cNm</th><th>validated</th></tr></thead>
    <tbody>${rows.join("")}</tbody></table>`;
}

function renderRadar(scores: Record<string, RadarScores>): void {
  const el = $("radar-panel");
  const cx = 150, cy = 150, r = 110;
  const geo = radarGeometry(cx, cy, r);
  const colors: Record<string, string> = {
    conventional: "#e63946", ar_guided: "#2a9d3a",
  };
  const rings = geo.rings
    .map((p) => `<polygon points="${p}" class="ring"/>`)
    .join("");
  const axes = geo.axisEnds
    .map(([x, y]) => `<line x1="${cx}" y1="${cy}" x2="${x}" y2="${y}" class="axis"/>`)
    .join("");
  const labels = geo.labels
    .map((l) => `<text x="${l.x}" y="${l.y}" text-anchor="middle">${l.text}</text>`)
    .join("");
  const polys = Object.entries(scores)
    .map(([method, sc]) => {
      const pts = pointsAttr(radarPolygon(scoresToValues(sc), cx, cy, r));
      const color = colors[method] ?? "#888";
      return `<polygon points="${pts}" fill="${color}33" stroke="${color}" stroke-width="2"/>`;
    })
    .join("");
  const legend = Object.keys(scores)
    .map((m) => `<span style="color:${colors[m] ?? "#888"}">&#9632; ${m}</span>`)
    .join(" ");
  el.innerHTML = `<h3>performance radar</h3>
    <svg viewBox="0 0 300 300">${rings}${axes}${polys}${labels}</svg>
    <div class="legend">${legend}</div>`;
  el.style.display = "block";
}

connect();
requestAnimationFrame(render);
