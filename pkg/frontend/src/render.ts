// Top-down 2D canvas rendering of the scene model with pan/zoom.

import type { ClientSceneModel } from "./scene.js";

export const TERRAIN_FILL: Record<string, string> = {
  pavement: "#bebebe",
  grass: "#46a03c",
  gravel: "#96826e",
  asphalt_road: "#3c3c46",
  crosswalk: "#ebebeb",
  indoor_floor: "#cdb996",
  unknown: "#786e64",
};

export interface Viewport {
  centerX: number;
  centerY: number;
  pxPerMeter: number;
  width: number;
  height: number;
}

/** World (odom) point to canvas pixel; world X is up on screen. */
export function worldToScreen(
  view: Viewport,
  x: number,
  y: number,
): [number, number] {
  const sx = view.width / 2 - (y - view.centerY) * view.pxPerMeter;
  const sy = view.height / 2 - (x - view.centerX) * view.pxPerMeter;
  return [sx, sy];
}

export function zoomed(view: Viewport, factor: number): Viewport {
  const pxPerMeter = Math.min(200, Math.max(2, view.pxPerMeter * factor));
  return { ...view, pxPerMeter };
}

export function panned(view: Viewport, dxPx: number, dyPx: number): Viewport {
  return {
    ...view,
    centerY: view.centerY + dxPx / view.pxPerMeter,
    centerX: view.centerX + dyPx / view.pxPerMeter,
  };
}

function polygonPath(
  ctx: CanvasRenderingContext2D,
  view: Viewport,
  polygon: [number, number][],
): void {
  ctx.beginPath();
  polygon.forEach(([x, y], i) => {
    const [sx, sy] = worldToScreen(view, x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  scene: ClientSceneModel,
  view: Viewport,
): void {
  ctx.fillStyle = "#1c1f24";
  ctx.fillRect(0, 0, view.width, view.height);
  const world = scene.world;
  if (!world) return;

  for (const region of world.terrain) {
    polygonPath(ctx, view, region.polygon);
    ctx.fillStyle = TERRAIN_FILL[region.class] ?? TERRAIN_FILL.unknown;
    ctx.fill();
  }
  for (const obstacle of world.obstacles) {
    polygonPath(ctx, view, obstacle);
    ctx.fillStyle = "#5a3c28";
    ctx.fill();
  }

  const [gx, gy] = worldToScreen(view, world.goal[0], world.goal[1]);
  ctx.strokeStyle = "#ffd700";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(gx, gy, 6, 0, Math.PI * 2);
  ctx.stroke();

  if (scene.trail.length > 1) {
    ctx.strokeStyle = "#9ad0ff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    scene.trail.forEach(([x, y], i) => {
      const [sx, sy] = worldToScreen(view, x, y);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    ctx.stroke();
  }
  if (scene.recordedTrail.length > 1) {
    ctx.strokeStyle = "#ff6060";
    ctx.lineWidth = 2;
    ctx.beginPath();
    scene.recordedTrail.forEach(([x, y], i) => {
      const [sx, sy] = worldToScreen(view, x, y);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    ctx.stroke();
  }

  const state = scene.state;
  if (!state) return;

  if (state.reference_path.length > 0) {
    ctx.strokeStyle = "#3cf03c";
    ctx.lineWidth = 2;
    ctx.beginPath();
    const [rx, ry] = worldToScreen(view, state.pose[0], state.pose[1]);
    ctx.moveTo(rx, ry);
    for (const [x, y] of state.reference_path) {
      const [sx, sy] = worldToScreen(view, x, y);
      ctx.lineTo(sx, sy);
    }
    ctx.stroke();
    ctx.fillStyle = "#3cf03c";
    for (const [x, y] of state.reference_path) {
      const [sx, sy] = worldToScreen(view, x, y);
      ctx.beginPath();
      ctx.arc(sx, sy, 3, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  for (const ped of state.pedestrians) {
    const [sx, sy] = worldToScreen(view, ped.position[0], ped.position[1]);
    ctx.fillStyle = "#c83c3c";
    ctx.beginPath();
    ctx.arc(sx, sy, ped.radius * view.pxPerMeter, 0, Math.PI * 2);
    ctx.fill();
  }

  // robot: disk plus heading tick
  const [rx, ry] = worldToScreen(view, state.pose[0], state.pose[1]);
  const r = world.robot_radius * view.pxPerMeter;
  ctx.fillStyle = state.collision ? "#ff2020" : "#f0f0f0";
  ctx.beginPath();
  ctx.arc(rx, ry, r, 0, Math.PI * 2);
  ctx.fill();
  const hx = state.pose[0] + Math.cos(state.pose[2]) * world.robot_radius * 1.6;
  const hy = state.pose[1] + Math.sin(state.pose[2]) * world.robot_radius * 1.6;
  const [sx, sy] = worldToScreen(view, hx, hy);
  ctx.strokeStyle = "#202020";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(rx, ry);
  ctx.lineTo(sx, sy);
  ctx.stroke();
}
