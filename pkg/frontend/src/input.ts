// Keyboard teleoperation: held keys ramp the commanded velocities toward
// the server-advertised limits; releasing decays them to zero within a few
// intervals. The loop emits at a fixed cadence that never exceeds the
// server tick rate.

import type { TeleopCommand } from "./protocol.js";

export interface TeleopLimits {
  vMax: number;
  omegaMax: number;
}

const KEY_ALIASES: Record<string, string> = {
  w: "forward",
  arrowup: "forward",
  s: "reverse",
  arrowdown: "reverse",
  a: "left",
  arrowleft: "left",
  d: "right",
  arrowright: "right",
};

export class KeyboardTeleop {
  private held = new Set<string>();
  private v = 0;
  private omega = 0;
  readonly vStep: number;
  readonly omegaStep: number;
  readonly decay: number;

  constructor(
    private limits: TeleopLimits,
    opts: { vStep?: number; omegaStep?: number; decay?: number } = {},
  ) {
    this.vStep = opts.vStep ?? limits.vMax / 10;
    this.omegaStep = opts.omegaStep ?? limits.omegaMax / 10;
    this.decay = opts.decay ?? 0.5;
  }

  keyDown(key: string): void {
    const action = KEY_ALIASES[key.toLowerCase()];
    if (action) this.held.add(action);
  }

  keyUp(key: string): void {
    const action = KEY_ALIASES[key.toLowerCase()];
    if (action) this.held.delete(action);
  }

  releaseAll(): void {
    this.held.clear();
  }

  /** Advance one command interval and return the command to send. */
  tick(): TeleopCommand {
    if (this.held.has("forward")) {
      this.v = Math.min(this.limits.vMax, this.v + this.vStep);
    } else if (this.held.has("reverse")) {
      this.v = Math.max(-this.limits.vMax, this.v - this.vStep);
    } else {
      this.v = Math.abs(this.v) < 1e-4 ? 0 : this.v * this.decay;
    }
    if (this.held.has("left")) {
      this.omega = Math.min(this.limits.omegaMax, this.omega + this.omegaStep);
    } else if (this.held.has("right")) {
      this.omega = Math.max(-this.limits.omegaMax, this.omega - this.omegaStep);
    } else {
      this.omega = Math.abs(this.omega) < 1e-4 ? 0 : this.omega * this.decay;
    }
    return { v: this.v, omega: this.omega };
  }
}

/**
 * Command cadence guard: given the server tick rate, returns the interval
 * in milliseconds at which the input loop may send commands (never faster
 * than the simulation ticks).
 */
export function commandIntervalMs(tickRate: number, desiredHz?: number): number {
  const hz = Math.min(desiredHz ?? tickRate, tickRate);
  return 1000 / hz;
}
