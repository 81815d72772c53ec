// Client-side scene model. Holds exactly what the server sent: the client
// never simulates physics, never extrapolates poses, and drops stale or
// out-of-order state messages.

import type { Envelope, StatePayload, WorldStatic } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export class ClientSceneModel {
  world: WorldStatic | null = null;
  state: StatePayload | null = null;
  lastTick = -1;
  trail: [number, number][] = [];
  recordedTrail: [number, number][] = [];
  status: ConnectionStatus = "connecting";
  notice = "";
  savedLogPath = "";

  /** Apply a server message; returns true when the message was consumed. */
  apply(msg: Envelope): boolean {
    switch (msg.type) {
      case "world_static":
        this.world = msg.payload as WorldStatic;
        return true;
      case "state": {
        if (msg.tick <= this.lastTick) {
          return false; // stale or duplicate: monotone tick rule
        }
        const payload = msg.payload as StatePayload;
        const wasRecording = this.state?.recording ?? false;
        this.lastTick = msg.tick;
        this.state = payload;
        this.trail.push([payload.pose[0], payload.pose[1]]);
        if (payload.recording) {
          if (!wasRecording) {
            this.recordedTrail = [];
          }
          this.recordedTrail.push([payload.pose[0], payload.pose[1]]);
        }
        return true;
      }
      case "record_saved":
        this.savedLogPath = (msg.payload as { path: string }).path;
        this.notice = `recording saved: ${this.savedLogPath}`;
        return true;
      case "record_started":
        this.notice = "recording";
        return true;
      case "notice":
        this.notice = (msg.payload as { text: string }).text;
        return true;
      default:
        return false;
    }
  }

  /** Reset volatile state on reconnect; the server will resend world_static. */
  onDisconnect(): void {
    this.status = "disconnected";
    this.lastTick = -1;
    if (this.state?.recording) {
      // the server finalizes recordings when the driver drops
      this.notice = "connection lost: the server finalized the active recording";
    }
  }

  pose(): [number, number, number] | null {
    return this.state ? this.state.pose : null;
  }
}
