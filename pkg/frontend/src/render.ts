// Scene construction: state + view -> flat list of draw operations. The
// canvas adapter below just replays them, so everything interesting is
// testable without a DOM. Colors follow the runner's debug convention:
// goal pull green, obstacle pushes red.

import { StateMessage } from "./protocol.js";
import { ViewState } from "./view.js";

export type DrawOp =
  | { kind: "grid"; spacingPx: number }
  | { kind: "rect"; x: number; y: number; w: number; h: number;
      color: string; fill: boolean }
  | { kind: "circle"; x: number; y: number; r: number; color: string;
      fill: boolean }
  | { kind: "triangle"; x: number; y: number; yaw: number; size: number;
      color: string }
  | { kind: "line"; x0: number; y0: number; x1: number; y1: number;
      color: string; width: number; alpha?: number }
  | { kind: "arrow"; x: number; y: number; dx: number; dy: number;
      color: string; label?: string }
  | { kind: "banner"; text: string };

const POLICY_COLORS: Record<string, string> = {
  goal: "#2e9e4f",
  yaw: "#8f6ae0",
  static: "#d14545",
  dynamic: "#e08a2e",
  combined: "#ffffff",
};

export function buildScene(state: StateMessage | null, view: ViewState,
                           stalenessSeconds: number): DrawOp[] {
  const ops: DrawOp[] = [{ kind: "grid", spacingPx: view.scale(1.0) }];
  if (state === null) {
    ops.push({ kind: "banner", text: "waiting for simulator" });
    return ops;
  }

  if (view.layers.cubes) {
    for (const cube of state.cubes) {
      const [sx, sy] = view.toScreen(cube.x, cube.y);
      const side = view.scale(cube.side);
      ops.push({ kind: "rect", x: sx - side / 2, y: sy - side / 2,
                 w: side, h: side, color: "#3f6f4f", fill: true });
    }
  }

  if (state.goal !== null) {
    const [gx, gy] = view.toScreen(state.goal[0], state.goal[1]);
    ops.push({ kind: "circle", x: gx, y: gy, r: view.scale(0.12),
               color: POLICY_COLORS.goal, fill: false });
  }

  if (view.layers.agents) {
    for (const agent of state.agents) {
      const [ax, ay] = view.toScreen(agent.x, agent.y);
      ops.push({ kind: "circle", x: ax, y: ay, r: view.scale(0.25),
                 color: agent.leader ? "#58c7ff" : "#cccccc", fill: true });
    }
  }

  if (view.layers.tracker && state.tracker.px !== null && state.tracker.py !== null) {
    const [tx, ty] = view.toScreen(state.tracker.px, state.tracker.py!);
    // hollow while coasting: the belief is running on the motion model only
    const solid = state.tracker.status === "TRACKING";
    ops.push({ kind: "circle", x: tx, y: ty, r: view.scale(0.18),
               color: "#ffd24a", fill: solid });
  }

  const [rx, ry] = view.toScreen(state.robot.x, state.robot.y);
  ops.push({ kind: "triangle", x: rx, y: ry, yaw: state.robot.yaw,
             size: view.scale(0.3), color: "#e8e8e8" });

  if (view.layers.aoa && state.aoa !== null) {
    const world = state.robot.yaw + state.aoa.azimuth;
    const len = view.scale(3.0);
    const alpha = state.aoa.low_confidence
      ? 0.15
      : Math.min(1.0, 0.2 + state.aoa.confidence / 20.0);
    ops.push({ kind: "line", x0: rx, y0: ry,
               x1: rx - Math.sin(world) * len, y1: ry - Math.cos(world) * len,
               color: "#58c7ff", width: 2, alpha });
  }

  if (view.layers.arrows) {
    const arrowScale = view.scale(0.25);
    for (const arrow of state.policy_arrows) {
      const color = POLICY_COLORS[arrow.name] ?? "#999999";
      ops.push({ kind: "arrow", x: rx, y: ry,
                 dx: -arrow.ay * arrowScale, dy: -arrow.ax * arrowScale,
                 color, label: arrow.name });
    }
  }

  if (view.isStale(stalenessSeconds)) {
    ops.push({ kind: "banner", text: "disconnected: stream stale" });
  }
  return ops;
}

export function drawScene(ctx: CanvasRenderingContext2D, ops: DrawOp[],
                          width: number, height: number): void {
  ctx.fillStyle = "#15181c";
  ctx.fillRect(0, 0, width, height);
  for (const op of ops) {
    switch (op.kind) {
      case "grid": {
        ctx.strokeStyle = "#252a31";
        ctx.lineWidth = 1;
        for (let x = (width / 2) % op.spacingPx; x < width; x += op.spacingPx) {
          ctx.beginPath(); ctx.moveTo(x, 0); ctx.lineTo(x, height); ctx.stroke();
        }
        for (let y = (height / 2) % op.spacingPx; y < height; y += op.spacingPx) {
          ctx.beginPath(); ctx.moveTo(0, y); ctx.lineTo(width, y); ctx.stroke();
        }
        break;
      }
      case "rect":
        ctx.fillStyle = op.color;
        ctx.strokeStyle = op.color;
        if (op.fill) ctx.fillRect(op.x, op.y, op.w, op.h);
        else ctx.strokeRect(op.x, op.y, op.w, op.h);
        break;
      case "circle":
        ctx.beginPath();
        ctx.arc(op.x, op.y, op.r, 0, 2 * Math.PI);
        if (op.fill) { ctx.fillStyle = op.color; ctx.fill(); }
        else { ctx.strokeStyle = op.color; ctx.lineWidth = 2; ctx.stroke(); }
        break;
      case "triangle": {
        const a = -op.yaw - Math.PI / 2;
        ctx.save();
        ctx.translate(op.x, op.y);
        ctx.rotate(a);
        ctx.beginPath();
        ctx.moveTo(0, -op.size);
        ctx.lineTo(op.size * 0.6, op.size * 0.8);
        ctx.lineTo(-op.size * 0.6, op.size * 0.8);
        ctx.closePath();
        ctx.fillStyle = op.color;
        ctx.fill();
        ctx.restore();
        break;
      }
      case "line":
        ctx.save();
        ctx.globalAlpha = op.alpha ?? 1.0;
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.beginPath();
        ctx.moveTo(op.x0, op.y0);
        ctx.lineTo(op.x1, op.y1);
        ctx.stroke();
        ctx.restore();
        break;
      case "arrow": {
        ctx.strokeStyle = op.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(op.x, op.y);
        ctx.lineTo(op.x + op.dx, op.y + op.dy);
        ctx.stroke();
        const tip = Math.atan2(op.dy, op.dx);
        ctx.beginPath();
        ctx.moveTo(op.x + op.dx, op.y + op.dy);
        ctx.lineTo(op.x + op.dx - 6 * Math.cos(tip - 0.4),
                   op.y + op.dy - 6 * Math.sin(tip - 0.4));
        ctx.moveTo(op.x + op.dx, op.y + op.dy);
        ctx.lineTo(op.x + op.dx - 6 * Math.cos(tip + 0.4),
                   op.y + op.dy - 6 * Math.sin(tip + 0.4));
        ctx.stroke();
        break;
      }
      case "banner":
        ctx.fillStyle = "#d14545";
        ctx.fillRect(0, 0, width, 28);
        ctx.fillStyle = "#ffffff";
        ctx.font = "14px monospace";
        ctx.fillText(op.text, 10, 19);
        break;
    }
  }
}
