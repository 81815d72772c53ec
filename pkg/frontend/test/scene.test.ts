import { describe, expect, it } from "vitest";

import type { Envelope, StatePayload, WorldStatic } from "../src/protocol.js";
import { ClientSceneModel } from "../src/scene.js";

const WORLD: WorldStatic = {
  terrain: [
    {
      polygon: [
        [-2, -2],
        [10, -2],
        [10, 2],
        [-2, 2],
      ],
      class: "indoor_floor",
      context: "indoor_corridor",
    },
  ],
  obstacles: [],
  goal: [8, 0],
  robot_radius: 0.3,
  v_max: 0.3,
  omega_max: 1.0,
  tick_rate: 10,
  scenario: "corridor",
};

function stateMsg(tick: number, overrides: Partial<StatePayload> = {}): Envelope {
  const payload: StatePayload = {
    pose: [tick * 0.03, 0, 0],
    v: 0.3,
    omega: 0,
    pedestrians: [],
    reference_path: [],
    markers: [],
    mode: "teleop",
    recording: false,
    collision: false,
    goal_reached: false,
    metrics: { ticks: tick, queries: 0 },
    ...overrides,
  };
  return { v: 1, type: "state", tick, payload };
}

describe("ClientSceneModel", () => {
  it("stores world_static and state messages", () => {
    const scene = new ClientSceneModel();
    expect(scene.apply({ v: 1, type: "world_static", tick: 0, payload: WORLD })).toBe(true);
    expect(scene.world?.scenario).toBe("corridor");
    expect(scene.apply(stateMsg(1))).toBe(true);
    expect(scene.pose()).toEqual([0.03, 0, 0]);
  });

  it("rendered pose always equals the last received state", () => {
    const scene = new ClientSceneModel();
    for (let t = 1; t <= 5; t++) scene.apply(stateMsg(t));
    expect(scene.pose()).toEqual([5 * 0.03, 0, 0]);
    expect(scene.lastTick).toBe(5);
  });

  it("drops stale and out-of-order state messages", () => {
    const scene = new ClientSceneModel();
    scene.apply(stateMsg(5));
    expect(scene.apply(stateMsg(3))).toBe(false);
    expect(scene.apply(stateMsg(5))).toBe(false);
    expect(scene.pose()).toEqual([5 * 0.03, 0, 0]);
    expect(scene.trail.length).toBe(1);
  });

  it("holds no physics state: a fresh model resynchronizes from messages alone", () => {
    // a "page reload" is a brand new model; replaying the same server
    // stream yields the same rendered pose with no client-side simulation
    const stream = [
      { v: 1, type: "world_static", tick: 0, payload: WORLD } as Envelope,
      stateMsg(1),
      stateMsg(2),
      stateMsg(3),
    ];
    const before = new ClientSceneModel();
    stream.forEach((m) => before.apply(m));
    const reloaded = new ClientSceneModel();
    stream.slice(2).forEach((m) => reloaded.apply(m)); // missed early frames
    reloaded.apply({ v: 1, type: "world_static", tick: 0, payload: WORLD });
    expect(reloaded.pose()).toEqual(before.pose());
  });

  it("tracks the recorded trail only while recording", () => {
    const scene = new ClientSceneModel();
    scene.apply(stateMsg(1));
    scene.apply(stateMsg(2, { recording: true }));
    scene.apply(stateMsg(3, { recording: true }));
    scene.apply(stateMsg(4));
    expect(scene.recordedTrail.length).toBe(2);
    expect(scene.trail.length).toBe(4);
  });

  it("captures the saved log path", () => {
    const scene = new ClientSceneModel();
    scene.apply({
      v: 1,
      type: "record_saved",
      tick: 9,
      payload: { path: "runs/teleop_1.jsonl" },
    });
    expect(scene.savedLogPath).toBe("runs/teleop_1.jsonl");
    expect(scene.notice).toContain("runs/teleop_1.jsonl");
  });

  it("resets tick tracking on disconnect so a restarted server resyncs", () => {
    const scene = new ClientSceneModel();
    scene.apply(stateMsg(500));
    scene.onDisconnect();
    expect(scene.status).toBe("disconnected");
    expect(scene.apply(stateMsg(1))).toBe(true); // server restarted from 0
  });

  it("warns when a disconnect interrupted an active recording", () => {
    const scene = new ClientSceneModel();
    scene.apply(stateMsg(1, { recording: true }));
    scene.onDisconnect();
    expect(scene.notice).toContain("finalized");
    const clean = new ClientSceneModel();
    clean.apply(stateMsg(1));
    clean.onDisconnect();
    expect(clean.notice).toBe("");
  });
});
