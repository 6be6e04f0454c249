// Keyboard steering: held keys stream velocity commands at a fixed cadence,
// clamped to the leader's speed limit; releasing everything sends a single
// zero command so the leader stops.

import { steerMessage } from "./protocol.js";

export const STEER_RATE_HZ = 20;
export const MAX_SPEED = 2.5;

type KeyName = "up" | "down" | "left" | "right";

const KEY_MAP: Record<string, KeyName> = {
  ArrowUp: "up",
  ArrowDown: "down",
  ArrowLeft: "left",
  ArrowRight: "right",
  w: "up",
  s: "down",
  a: "left",
  d: "right",
};

export class SteeringController {
  speedScale: number;
  private held = new Set<KeyName>();
  private timer: ReturnType<typeof setInterval> | null = null;
  private zeroSent = true;
  private readonly send: (payload: string) => void;
  private readonly setIntervalFn: typeof setInterval;
  private readonly clearIntervalFn: typeof clearInterval;

  constructor(send: (payload: string) => void, speedScale = 1.0,
              setIntervalFn: typeof setInterval = setInterval,
              clearIntervalFn: typeof clearInterval = clearInterval) {
    this.send = send;
    this.speedScale = speedScale;
    this.setIntervalFn = setIntervalFn;
    this.clearIntervalFn = clearIntervalFn;
  }

  keyDown(key: string): void {
    const name = KEY_MAP[key];
    if (name === undefined) return;
    this.held.add(name);
    this.ensureTimer();
  }

  keyUp(key: string): void {
    const name = KEY_MAP[key];
    if (name === undefined) return;
    this.held.delete(name);
  }

  /** Velocity for the currently held keys, world frame, clamped. */
  command(): { vx: number; vy: number } {
    let vx = 0;
    let vy = 0;
    if (this.held.has("up")) vx += 1;
    if (this.held.has("down")) vx -= 1;
    if (this.held.has("left")) vy += 1;
    if (this.held.has("right")) vy -= 1;
    const norm = Math.hypot(vx, vy);
    if (norm === 0) return { vx: 0, vy: 0 };
    const speed = Math.min(MAX_SPEED * this.speedScale, MAX_SPEED);
    return { vx: (vx / norm) * speed, vy: (vy / norm) * speed };
  }

  private ensureTimer(): void {
    if (this.timer !== null) return;
    this.timer = this.setIntervalFn(() => this.tick(), 1000 / STEER_RATE_HZ);
  }

  private tick(): void {
    const { vx, vy } = this.command();
    if (vx === 0 && vy === 0) {
      if (!this.zeroSent) {
        this.send(steerMessage(0, 0));
        this.zeroSent = true;
      }
      if (this.held.size === 0 && this.timer !== null) {
        this.clearIntervalFn(this.timer);
        this.timer = null;
      }
      return;
    }
    this.zeroSent = false;
    this.send(steerMessage(vx, vy));
  }

  stop(): void {
    if (this.timer !== null) {
      this.clearIntervalFn(this.timer);
      this.timer = null;
    }
    this.held.clear();
  }
}
