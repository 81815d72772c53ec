"""WebSocket simulation service for teleoperation and live viewing.

One asyncio task owns the simulation loop and all mutable state; client
messages land in a queue and are applied at tick boundaries. The first
connected client is authoritative (may drive and record); later clients
are view-only. Protocol (versioned envelope, all SI units):

  server -> client
    {"v": 1, "type": "world_static", "tick": t, "payload": {...}}   on connect
    {"v": 1, "type": "state",        "tick": t, "payload": {...}}   every tick
    {"v": 1, "type": "record_started"|"record_saved"|"notice", ...}

  client -> server
    {"type": "teleop_cmd",  "payload": {"v": float, "omega": float}}
    {"type": "mode",        "payload": {"mode": "teleop"|"autonomous"}}
    {"type": "record_start"}
    {"type": "record_stop"}

The ``state`` payload carries pose [x, y, theta], velocities, pedestrian
disks, the active reference path (odom points), latest marker pixels,
mode/recording flags, and metrics-so-far. ``world_static`` carries terrain
polygons with classes, obstacle polygons, the goal, robot limits, and the
tick rate.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
import math
import time
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .navigator import Navigator, QueryDecision
from .runlog import RunLogHeader, RunLogRecord, RunLogWriter
from .scenario import Scenario
from .simulate import Simulation, make_oracle_stack

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


def _envelope(msg_type: str, tick: int, payload=None) -> dict:
    return {"v": PROTOCOL_VERSION, "type": msg_type, "tick": tick, "payload": payload or {}}


class SimulationService:
    def __init__(self, scenario: Scenario, mode: str = "teleop", out_dir: str = "runs/serve"):
        if mode not in ("teleop", "autonomous"):
            raise ValueError(f"unknown mode {mode!r}")
        self.scenario = scenario
        self.mode = mode
        self.out_dir = Path(out_dir)
        self.sim = Simulation(scenario)
        classifier, backend = make_oracle_stack(scenario, self.sim)
        self.navigator = Navigator(
            cam=scenario.cam,
            catalog=scenario.catalog,
            classifier=classifier,
            vlm_backend=backend,
            nav_cfg=scenario.nav,
            planner_cfg=scenario.planner,
        )
        self.clients: list[WebSocket] = []
        self.authoritative: WebSocket | None = None
        self.inbox: asyncio.Queue = asyncio.Queue()
        self.teleop_cmd = (0.0, 0.0)
        self.recording = False
        self.records: list[RunLogRecord] = []
        self.record_start_state: tuple | None = None
        self.saved_logs: list[str] = []
        self.latest_markers: list[dict] = []
        self._stop = False
        self._task: asyncio.Task | None = None

    # -- message handling at tick boundaries -------------------------------

    def _clamp(self, v: float, omega: float) -> tuple[float, float]:
        robot = self.scenario.robot
        return (
            min(max(v, -robot.v_max), robot.v_max),
            min(max(omega, -robot.omega_max), robot.omega_max),
        )

    async def _apply_inbox(self):
        while not self.inbox.empty():
            ws, msg = self.inbox.get_nowait()
            msg_type = msg.get("type")
            payload = msg.get("payload") or {}
            if ws is not self.authoritative:
                continue  # view-only clients cannot drive or record
            if msg_type == "teleop_cmd":
                if self.mode == "teleop":
                    self.teleop_cmd = self._clamp(
                        float(payload.get("v", 0.0)), float(payload.get("omega", 0.0))
                    )
            elif msg_type == "mode":
                new_mode = payload.get("mode")
                if new_mode in ("teleop", "autonomous") and new_mode != self.mode:
                    self.mode = new_mode
                    self.teleop_cmd = (0.0, 0.0)
            elif msg_type == "record_start":
                if not self.recording:
                    self._start_recording()
                    await self._send(ws, _envelope("record_started", self.sim.tick))
            elif msg_type == "record_stop":
                if self.recording:
                    path = self._finish_recording()
                    await self._send(ws, _envelope("record_saved", self.sim.tick, {"path": path}))
                else:
                    await self._send(
                        ws, _envelope("notice", self.sim.tick, {"text": "not recording"})
                    )

    def _start_recording(self):
        self.recording = True
        self.records = []
        state = self.sim.state
        self.record_start_state = (
            (state.pose.x, state.pose.y, state.pose.theta),
            state.v,
            state.omega,
            self.sim.tick,
        )

    def _finish_recording(self) -> str:
        self.recording = False
        start_pose, start_v, start_omega, start_tick = self.record_start_state
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"teleop_{int(time.time())}_{start_tick}.jsonl"
        header = RunLogHeader(
            scenario=self.scenario.name,
            source="teleop" if self.mode == "teleop" else "vlm",
            seed=self.scenario.seed,
            tick_rate=self.scenario.tick_rate,
            goal=self.scenario.world.goal,
            start_pose=start_pose,
            extra={"start_v": start_v, "start_omega": start_omega, "start_tick": start_tick},
        )
        with RunLogWriter(path, header) as writer:
            for record in self.records:
                writer.append(record)
        self.records = []
        self.saved_logs.append(str(path))
        return str(path)

    # -- per-tick step ------------------------------------------------------

    def _step_once(self):
        snapshot = self.sim.snapshot()
        if self.mode == "autonomous":
            result = self.navigator.tick(snapshot)
            cmd = result.command
            decision = result.decision.value
            if result.query_start is not None:
                qs = result.query_start
                self.latest_markers = [
                    {"label": int(label), "pixel": [px[0], px[1]]}
                    for label, px in zip(qs.marker_labels, qs.marker_pixels)
                ]
        else:
            cmd = self.teleop_cmd
            decision = "teleop"
        record = RunLogRecord(
            tick=self.sim.tick,
            wall_time=time.time(),
            pose=(snapshot.pose.x, snapshot.pose.y, snapshot.pose.theta),
            cmd_v=cmd[0],
            cmd_omega=cmd[1],
            state_v=snapshot.v,
            state_omega=snapshot.omega,
            decision=decision,
        )
        self.sim.step(cmd)
        if self.recording:
            self.records.append(
                replace(record, collision=self.sim.collided) if self.sim.collided else record
            )
        return snapshot

    def _state_message(self) -> dict:
        state = self.sim.state
        path = self.navigator.path
        peds = [
            {"position": list(pos), "radius": r}
            for pos, r, _ in self.sim.world.pedestrian_states(self.sim.time)
        ]
        payload = {
            "pose": [state.pose.x, state.pose.y, state.pose.theta],
            "v": state.v,
            "omega": state.omega,
            "pedestrians": peds,
            "reference_path": [list(p) for p in path.points_odom] if path else [],
            "markers": self.latest_markers,
            "mode": self.mode,
            "recording": self.recording,
            "collision": self.sim.collided,
            "goal_reached": self.sim.goal_reached(),
            "metrics": {
                "ticks": self.sim.tick,
                "queries": self.navigator.query_count,
            },
        }
        return _envelope("state", self.sim.tick, payload)

    def world_static_message(self) -> dict:
        world = self.scenario.world
        robot = self.scenario.robot
        payload = {
            "terrain": [
                {
                    "polygon": [list(p) for p in region.polygon],
                    "class": region.terrain.value,
                    "context": region.context,
                }
                for region in world.terrain_regions
            ],
            "obstacles": [[list(p) for p in obs] for obs in world.static_obstacles],
            "goal": list(world.goal),
            "robot_radius": robot.radius,
            "v_max": robot.v_max,
            "omega_max": robot.omega_max,
            "tick_rate": self.scenario.tick_rate,
            "scenario": self.scenario.name,
        }
        return _envelope("world_static", self.sim.tick, payload)

    async def _send(self, ws: WebSocket, message: dict):
        try:
            await ws.send_json(message)
        except Exception:
            pass  # dropped clients are reaped in the receive loop

    async def _broadcast(self, message: dict):
        for ws in list(self.clients):
            await self._send(ws, message)

    async def loop(self):
        period = 1.0 / self.scenario.tick_rate
        next_due = time.perf_counter()
        while not self._stop:
            await self._apply_inbox()
            self._step_once()
            await self._broadcast(self._state_message())
            next_due += period
            delay = next_due - time.perf_counter()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_due = time.perf_counter()
                await asyncio.sleep(0)

    # -- client lifecycle ---------------------------------------------------

    async def attach(self, ws: WebSocket):
        await ws.accept()
        self.clients.append(ws)
        if self.authoritative is None:
            self.authoritative = ws
        await self._send(ws, self.world_static_message())
        try:
            while True:
                msg = await ws.receive_json()
                await self.inbox.put((ws, msg))
        except WebSocketDisconnect:
            pass
        finally:
            self.detach(ws)

    def detach(self, ws: WebSocket):
        if ws in self.clients:
            self.clients.remove(ws)
        if ws is self.authoritative:
            self.authoritative = self.clients[0] if self.clients else None
            self.teleop_cmd = (0.0, 0.0)
            if self.recording:
                # driver is gone: finalize so nothing is lost
                self._finish_recording()

    def shutdown(self):
        self._stop = True
        self.navigator.close()


def build_app(scenario: Scenario, mode: str = "teleop", out_dir: str = "runs/serve") -> FastAPI:
    service = SimulationService(scenario, mode=mode, out_dir=out_dir)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        service._task = asyncio.create_task(service.loop())
        yield
        service.shutdown()
        if service._task is not None:
            service._task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await service._task

    app = FastAPI(lifespan=lifespan)
    app.state.service = service

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await service.attach(ws)

    @app.get("/healthz")
    async def healthz():
        return {"tick": service.sim.tick, "mode": service.mode}

    return app
