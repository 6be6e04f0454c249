// Wire types for the runner's steering endpoint. The server is the source
// of truth; anything that does not validate is dropped by the caller.

export interface RobotPose {
  x: number;
  y: number;
  yaw: number;
}

export interface AgentState {
  id: string;
  x: number;
  y: number;
  leader: boolean;
}

export interface Cube {
  x: number;
  y: number;
  z: number;
  side: number;
}

export interface PolicyArrow {
  name: string;
  ax: number;
  ay: number;
}

export interface AoaReading {
  azimuth: number;
  confidence: number;
  low_confidence: boolean;
}

export interface TrackerState {
  status: string;
  px: number | null;
  py: number | null;
}

export interface StateMessage {
  type: "state";
  t: number;
  robot: RobotPose;
  agents: AgentState[];
  goal: [number, number] | null;
  cubes: Cube[];
  policy_arrows: PolicyArrow[];
  aoa: AoaReading | null;
  tracker: TrackerState;
}

export interface SteerMessage {
  type: "steer";
  vx: number;
  vy: number;
}

export interface ModeMessage {
  type: "mode";
  value: "interactive" | "scripted";
}

const isNum = (v: unknown): v is number =>
  typeof v === "number" && Number.isFinite(v);

function isRobot(v: unknown): v is RobotPose {
  const r = v as RobotPose;
  return !!r && isNum(r.x) && isNum(r.y) && isNum(r.yaw);
}

function isAgent(v: unknown): v is AgentState {
  const a = v as AgentState;
  return !!a && typeof a.id === "string" && isNum(a.x) && isNum(a.y) &&
    typeof a.leader === "boolean";
}

function isCube(v: unknown): v is Cube {
  const c = v as Cube;
  return !!c && isNum(c.x) && isNum(c.y) && isNum(c.z) && isNum(c.side);
}

function isArrow(v: unknown): v is PolicyArrow {
  const a = v as PolicyArrow;
  return !!a && typeof a.name === "string" && isNum(a.ax) && isNum(a.ay);
}

/** Parse one server frame; returns null for anything malformed. */
export function parseStateMessage(raw: string): StateMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  const m = obj as StateMessage;
  if (!m || m.type !== "state" || !isNum(m.t)) return null;
  if (!isRobot(m.robot)) return null;
  if (!Array.isArray(m.agents) || !m.agents.every(isAgent)) return null;
  if (m.goal !== null &&
      !(Array.isArray(m.goal) && m.goal.length === 2 && m.goal.every(isNum))) {
    return null;
  }
  if (!Array.isArray(m.cubes) || !m.cubes.every(isCube)) return null;
  if (!Array.isArray(m.policy_arrows) || !m.policy_arrows.every(isArrow)) return null;
  if (m.aoa !== null) {
    const a = m.aoa;
    if (!a || !isNum(a.azimuth) || !isNum(a.confidence) ||
        typeof a.low_confidence !== "boolean") {
      return null;
    }
  }
  const tr = m.tracker;
  if (!tr || typeof tr.status !== "string") return null;
  return m;
}

export function steerMessage(vx: number, vy: number): string {
  return JSON.stringify({ type: "steer", vx, vy } satisfies SteerMessage);
}

export function modeMessage(value: ModeMessage["value"]): string {
  return JSON.stringify({ type: "mode", value } satisfies ModeMessage);
}
