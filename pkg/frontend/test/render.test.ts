import { describe, expect, it } from "vitest";

import { panned, worldToScreen, zoomed, type Viewport } from "../src/render.js";

const VIEW: Viewport = {
  centerX: 0,
  centerY: 0,
  pxPerMeter: 40,
  width: 800,
  height: 600,
};

describe("worldToScreen", () => {
  it("maps the view center to the canvas center", () => {
    expect(worldToScreen(VIEW, 0, 0)).toEqual([400, 300]);
  });

  it("world forward (+x) is up on screen, world left (+y) is left", () => {
    const [, syAhead] = worldToScreen(VIEW, 1, 0);
    expect(syAhead).toBeLessThan(300);
    const [sxLeft] = worldToScreen(VIEW, 0, 1);
    expect(sxLeft).toBeLessThan(400);
  });

  it("scales with pxPerMeter", () => {
    const [sx] = worldToScreen(VIEW, 0, -2);
    expect(sx).toBe(400 + 2 * VIEW.pxPerMeter);
  });
});

describe("viewport controls", () => {
  it("zoom is clamped", () => {
    let v = VIEW;
    for (let i = 0; i < 50; i++) v = zoomed(v, 2);
    expect(v.pxPerMeter).toBeLessThanOrEqual(200);
    for (let i = 0; i < 50; i++) v = zoomed(v, 0.5);
    expect(v.pxPerMeter).toBeGreaterThanOrEqual(2);
  });

  it("panning moves the center in world units", () => {
    const v = panned(VIEW, 40, -80);
    expect(v.centerY).toBeCloseTo(1); // 40 px right drag shows world to the left
    expect(v.centerX).toBeCloseTo(-2);
  });
});
