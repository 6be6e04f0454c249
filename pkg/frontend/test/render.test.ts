import { describe, expect, it } from "vitest";

import { buildScene, DrawOp } from "../src/render.js";
import { StateMessage } from "../src/protocol.js";
import { ViewState } from "../src/view.js";

function state(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    t: 3.0,
    robot: { x: 0, y: 0, yaw: 0 },
    agents: [{ id: "leader", x: 2, y: 0, leader: true }],
    goal: [0.5, 0.0],
    cubes: [{ x: 4.0, y: 1.0, z: 0.5, side: 0.4 }],
    policy_arrows: [{ name: "goal", ax: 1, ay: 0 }, { name: "static", ax: -0.5, ay: 0 }],
    aoa: { azimuth: 0.1, confidence: 15, low_confidence: false },
    tracker: { status: "TRACKING", px: 2.0, py: 0.0 },
    ...overrides,
  };
}

const ofKind = (ops: DrawOp[], kind: string) => ops.filter((o) => o.kind === kind);

describe("buildScene", () => {
  it("draws cubes as size-true rectangles under the current zoom", () => {
    const view = new ViewState(800, 600);
    view.pixelsPerMeter = 50;
    const rects = ofKind(buildScene(state(), view, 0), "rect") as
      Array<Extract<DrawOp, { kind: "rect" }>>;
    expect(rects.length).toBe(1);
    expect(rects[0].w).toBeCloseTo(0.4 * 50);
    expect(rects[0].h).toBeCloseTo(0.4 * 50);
    view.zoom(2.0);
    const zoomed = ofKind(buildScene(state(), view, 0), "rect") as
      Array<Extract<DrawOp, { kind: "rect" }>>;
    expect(zoomed[0].w).toBeCloseTo(0.4 * 100);
  });

  it("renders the tracker belief hollow while coasting", () => {
    const view = new ViewState(800, 600);
    const coasting = state({ tracker: { status: "COASTING", px: 2, py: 0 } });
    const circles = ofKind(buildScene(coasting, view, 0), "circle") as
      Array<Extract<DrawOp, { kind: "circle" }>>;
    const belief = circles.find((c) => c.color === "#ffd24a")!;
    expect(belief.fill).toBe(false);
    const tracking = ofKind(buildScene(state(), view, 0), "circle") as
      Array<Extract<DrawOp, { kind: "circle" }>>;
    expect(tracking.find((c) => c.color === "#ffd24a")!.fill).toBe(true);
  });

  it("draws one arrow per policy plus the robot triangle", () => {
    const view = new ViewState(800, 600);
    const ops = buildScene(state(), view, 0);
    expect(ofKind(ops, "arrow").length).toBe(2);
    expect(ofKind(ops, "triangle").length).toBe(1);
  });

  it("only the grid survives when layers are toggled off", () => {
    const view = new ViewState(800, 600);
    view.layers = { cubes: false, arrows: false, aoa: false,
                    tracker: false, agents: false };
    const ops = buildScene(state({ goal: null }), view, 0);
    const kinds = new Set(ops.map((o) => o.kind));
    expect(kinds).toEqual(new Set(["grid", "triangle"]));
  });

  it("shows the stale banner when the stream ages out", () => {
    const view = new ViewState(800, 600);
    const fresh = buildScene(state(), view, 0.2);
    expect(ofKind(fresh, "banner").length).toBe(0);
    const stale = buildScene(state(), view, 1.5);
    expect(ofKind(stale, "banner").length).toBe(1);
  });

  it("renders a waiting banner with no state", () => {
    const view = new ViewState(800, 600);
    const ops = buildScene(null, view, Infinity);
    expect(ofKind(ops, "banner").length).toBe(1);
  });

  it("dims the AoA ray when flagged low confidence", () => {
    const view = new ViewState(800, 600);
    const low = state({ aoa: { azimuth: 0.1, confidence: 1.1, low_confidence: true } });
    const ray = ofKind(buildScene(low, view, 0), "line")[0] as
      Extract<DrawOp, { kind: "line" }>;
    expect(ray.alpha).toBeLessThan(0.2);
  });
});

describe("ViewState", () => {
  it("screen transform is consistent with pan and zoom", () => {
    const view = new ViewState(800, 600);
    const [cx, cy] = view.toScreen(0, 0);
    expect(cx).toBe(400);
    expect(cy).toBe(300);
    const [fx, fy] = view.toScreen(1, 0);   // forward = up the screen
    expect(fy).toBeLessThan(cy);
    expect(fx).toBe(cx);
    view.zoom(2);
    const [zx] = view.toScreen(0, 1);
    expect(400 - zx).toBeCloseTo(view.pixelsPerMeter);
  });

  it("staleness threshold is one second", () => {
    const view = new ViewState(100, 100);
    expect(view.isStale(0.99)).toBe(false);
    expect(view.isStale(1.01)).toBe(true);
  });
});
