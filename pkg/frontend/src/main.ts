// Entry point: wires the connection, scene model, keyboard teleop, canvas
// rendering, and the mode/recording controls together.

import { commandIntervalMs, KeyboardTeleop } from "./input.js";
import { Connection } from "./net.js";
import {
  modeMessage,
  recordStartMessage,
  recordStopMessage,
  teleopMessage,
  type Envelope,
  type WorldStatic,
} from "./protocol.js";
import { drawScene, panned, zoomed, type Viewport } from "./render.js";
import { ClientSceneModel } from "./scene.js";

const params = new URLSearchParams(window.location.search);
const wsUrl =
  params.get("ws") ?? `ws://${window.location.hostname || "localhost"}:8731/ws`;

const canvas = document.getElementById("map") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const noticeEl = document.getElementById("notice")!;
const modeButton = document.getElementById("mode") as HTMLButtonElement;
const recordButton = document.getElementById("record") as HTMLButtonElement;

const scene = new ClientSceneModel();
let view: Viewport = {
  centerX: 5,
  centerY: 0,
  pxPerMeter: 40,
  width: canvas.width,
  height: canvas.height,
};
let teleop: KeyboardTeleop | null = null;
let commandTimer: number | null = null;

function statusLine(): string {
  const parts = [`server: ${scene.status}`];
  if (scene.world) parts.push(`scenario: ${scene.world.scenario}`);
  if (scene.state) {
    parts.push(`tick: ${scene.lastTick}`);
    parts.push(`mode: ${scene.state.mode}`);
    parts.push(`queries: ${scene.state.metrics.queries}`);
    if (scene.state.recording) parts.push("REC");
    if (scene.state.collision) parts.push("COLLISION");
    if (scene.state.goal_reached) parts.push("GOAL");
  }
  return parts.join("  |  ");
}

function redraw(): void {
  drawScene(ctx, scene, view);
  statusEl.textContent = statusLine();
  noticeEl.textContent = scene.notice;
  if (scene.state) {
    modeButton.textContent =
      scene.state.mode === "teleop" ? "switch to autonomous" : "switch to teleop";
    recordButton.textContent = scene.state.recording ? "stop recording" : "start recording";
    recordButton.disabled = scene.state.mode !== "teleop";
  }
}

function startCommandLoop(world: WorldStatic): void {
  teleop = new KeyboardTeleop({ vMax: world.v_max, omegaMax: world.omega_max });
  if (commandTimer !== null) window.clearInterval(commandTimer);
  // command cadence never exceeds the simulation tick rate
  commandTimer = window.setInterval(() => {
    if (scene.state?.mode === "teleop" && teleop) {
      connection.send(teleopMessage(teleop.tick()));
    }
  }, commandIntervalMs(world.tick_rate, 10));
}

const connection = new Connection(wsUrl, {
  onMessage(msg: Envelope) {
    const consumed = scene.apply(msg);
    if (consumed && msg.type === "world_static") {
      const world = scene.world!;
      view = { ...view, centerX: world.goal[0] / 2, centerY: world.goal[1] / 2 };
      startCommandLoop(world);
    }
    if (consumed) redraw();
  },
  onStatus(status) {
    scene.status = status;
    if (status === "disconnected") {
      scene.onDisconnect();
      teleop?.releaseAll();
    }
    redraw();
  },
});

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  teleop?.keyDown(ev.key);
});
window.addEventListener("keyup", (ev) => teleop?.keyUp(ev.key));
window.addEventListener("blur", () => teleop?.releaseAll());

modeButton.addEventListener("click", () => {
  const next = scene.state?.mode === "teleop" ? "autonomous" : "teleop";
  connection.send(modeMessage(next));
});
recordButton.addEventListener("click", () => {
  if (scene.state?.recording) connection.send(recordStopMessage());
  else connection.send(recordStartMessage());
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  view = zoomed(view, ev.deltaY < 0 ? 1.15 : 1 / 1.15);
  redraw();
});
let dragging = false;
let last: [number, number] = [0, 0];
canvas.addEventListener("mousedown", (ev) => {
  dragging = true;
  last = [ev.clientX, ev.clientY];
});
window.addEventListener("mouseup", () => (dragging = false));
window.addEventListener("mousemove", (ev) => {
  if (!dragging) return;
  view = panned(view, ev.clientX - last[0], ev.clientY - last[1]);
  last = [ev.clientX, ev.clientY];
  redraw();
});

connection.start();
redraw();
