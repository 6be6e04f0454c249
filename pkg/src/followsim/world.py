"""Deterministic 2.5D world: static geometry, scripted or steered agents,
and a holonomic robot with first-order velocity lag.

The world owns all mutable simulation state. Sensor models read immutable
views of it (see sensors.py). All randomness flows through one seeded
generator owned by the caller, so identical seeds give identical runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import AgentConfig, RobotConfig
from .geometry import (
    body_to_world,
    circle_box_penetration_2d,
    circle_circle_penetration_2d,
    circle_segment_penetration_2d,
    wrap_angle,
)

log = logging.getLogger(__name__)


@dataclass
class Box:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        self.min_corner = np.asarray(self.min_corner, dtype=float)
        self.max_corner = np.asarray(self.max_corner, dtype=float)
        if np.any(self.max_corner <= self.min_corner):
            raise ValueError("box extents must be positive")


@dataclass
class Cylinder:
    center: np.ndarray            # (x, y)
    radius: float
    height: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder extents must be positive")


@dataclass
class Wall:
    start: np.ndarray             # (x, y) ground endpoints
    end: np.ndarray
    height: float

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.end = np.asarray(self.end, dtype=float)
        if self.height <= 0 or np.allclose(self.start, self.end):
            raise ValueError("wall must have positive length and height")

    def normal(self) -> np.ndarray:
        e = self.end - self.start
        n = np.array([e[1], -e[0]])
        return n / np.linalg.norm(n)


@dataclass
class WorldModel:
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    boxes: list = field(default_factory=list)
    cylinders: list = field(default_factory=list)
    walls: list = field(default_factory=list)

    def __post_init__(self):
        self.aabb_min = np.asarray(self.aabb_min, dtype=float)
        self.aabb_max = np.asarray(self.aabb_max, dtype=float)
        if np.any(self.aabb_max <= self.aabb_min):
            raise ValueError("world AABB must have positive volume")

    def box_tuples(self):
        return [(b.min_corner, b.max_corner) for b in self.boxes]

    def cylinder_tuples(self):
        return [(c.center[0], c.center[1], c.radius, 0.0, c.height) for c in self.cylinders]

    def wall_tuples(self):
        return [(w.start, w.end, w.height) for w in self.walls]


@dataclass
class AgentState:
    agent_id: str
    position: np.ndarray          # (x, y)
    velocity: np.ndarray          # (x, y) m/s
    heading: float = 0.0
    carries_beacon: bool = False
    waypoints: list = field(default_factory=list)
    speed: float = 1.0
    interactive: bool = False
    _waypoint_index: int = 0
    _steer_command: np.ndarray | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)


@dataclass
class RobotState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    # body-frame velocity and command
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    cmd_vx: float = 0.0
    cmd_vy: float = 0.0
    cmd_omega: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


class WorldSim:
    """Steps the world at the physics rate and resolves static contacts."""

    def __init__(self, world: WorldModel, robot: RobotState, agents: list,
                 robot_cfg: RobotConfig = RobotConfig(),
                 agent_cfg: AgentConfig = AgentConfig()):
        self.world = world
        self.robot = robot
        self.agents = agents
        self.robot_cfg = robot_cfg
        self.agent_cfg = agent_cfg
        self.time = 0.0
        self.fault_count = 0
        leaders = [a for a in agents if a.carries_beacon]
        if len(leaders) > 1:
            raise ValueError("at most one agent may carry the beacon")
        self.leader = leaders[0] if leaders else None

    # -- commands -----------------------------------------------------------

    def set_robot_command(self, vx: float, vy: float, omega: float):
        if not (math.isfinite(vx) and math.isfinite(vy) and math.isfinite(omega)):
            log.warning("non-finite robot command rejected, zeroing")
            self.fault_count += 1
            vx = vy = omega = 0.0
        cfg = self.robot_cfg
        speed = math.hypot(vx, vy)
        if speed > cfg.v_max:
            vx *= cfg.v_max / speed
            vy *= cfg.v_max / speed
        omega = max(-cfg.omega_max, min(cfg.omega_max, omega))
        self.robot.cmd_vx, self.robot.cmd_vy, self.robot.cmd_omega = vx, vy, omega

    def apply_leader_command(self, vx: float, vy: float):
        """Override the leader's scripted motion until released.

        Takes effect on the next physics tick; a (0, 0) command holds the
        leader in place, release() returns control to the script.
        """
        if self.leader is None:
            raise ValueError("no leader defined in this world")
        speed = math.hypot(vx, vy)
        if speed > self.agent_cfg.max_speed + 1e-9:
            raise ValueError(f"leader command {speed:.2f} m/s exceeds "
                             f"{self.agent_cfg.max_speed} m/s")
        self.leader._steer_command = np.array([vx, vy])

    def release_leader_command(self):
        if self.leader is not None:
            self.leader._steer_command = None

    # -- stepping -----------------------------------------------------------

    def step(self, dt: float):
        if not 0.0 < dt <= 0.02:
            raise ValueError("physics step must be in (0, 0.02] s")
        self._step_agents(dt)
        self._step_robot(dt)
        self.time += dt

    def _step_agents(self, dt: float):
        for agent in self.agents:
            if agent._steer_command is not None:
                agent.velocity = agent._steer_command.copy()
            elif agent.waypoints and agent._waypoint_index < len(agent.waypoints):
                target = np.asarray(agent.waypoints[agent._waypoint_index], dtype=float)
                delta = target - agent.position
                dist = float(np.linalg.norm(delta))
                if dist < max(agent.speed * dt, 1e-6):
                    agent.position = target.copy()
                    agent._waypoint_index += 1
                    agent.velocity = np.zeros(2)
                    continue
                agent.velocity = delta / dist * agent.speed
            else:
                agent.velocity = np.zeros(2)
            speed = float(np.linalg.norm(agent.velocity))
            if speed > self.agent_cfg.max_speed:
                agent.velocity *= self.agent_cfg.max_speed / speed
            agent.position = agent.position + agent.velocity * dt
            if speed > 1e-3:
                agent.heading = math.atan2(agent.velocity[1], agent.velocity[0])
            self._resolve_static(agent.position, self.agent_cfg.body_radius)
            self._clamp_to_world(agent.position, self.agent_cfg.body_radius)

    def _step_robot(self, dt: float):
        r = self.robot
        decay = math.exp(-dt / self.robot_cfg.lag_time_constant)
        r.vx = r.cmd_vx + (r.vx - r.cmd_vx) * decay
        r.vy = r.cmd_vy + (r.vy - r.cmd_vy) * decay
        r.omega = r.cmd_omega + (r.omega - r.cmd_omega) * decay
        wx, wy = body_to_world(r.vx, r.vy, r.yaw)
        pos = np.array([r.x + wx * dt, r.y + wy * dt])
        self._resolve_static(pos, self.robot_cfg.footprint_radius)
        self._clamp_to_world(pos, self.robot_cfg.footprint_radius)
        r.x, r.y = float(pos[0]), float(pos[1])
        r.yaw = float(wrap_angle(r.yaw + r.omega * dt))

    def _resolve_static(self, pos: np.ndarray, radius: float, passes: int = 3):
        """Push a footprint disc out of every static shape (slide contact)."""
        for _ in range(passes):
            moved = False
            for b in self.world.boxes:
                push = circle_box_penetration_2d(pos, radius, b.min_corner[:2], b.max_corner[:2])
                if push is not None:
                    pos += push
                    moved = True
            for c in self.world.cylinders:
                push = circle_circle_penetration_2d(pos, radius, c.center, c.radius)
                if push is not None:
                    pos += push
                    moved = True
            for w in self.world.walls:
                push = circle_segment_penetration_2d(pos, radius, w.start, w.end)
                if push is not None:
                    pos += push
                    moved = True
            if not moved:
                return

    def _clamp_to_world(self, pos: np.ndarray, radius: float):
        lo = self.world.aabb_min[:2] + radius
        hi = self.world.aabb_max[:2] - radius
        np.clip(pos, lo, hi, out=pos)

    # -- queries used by sensors and metrics ---------------------------------

    def agent_capsules(self, exclude=None):
        """Axis segments (cx, cy, r, z0, z1) of the body capsules; the caps
        extend r beyond the segment so the full height is body_height."""
        r = self.agent_cfg.body_radius
        h = self.agent_cfg.body_height
        caps = []
        for a in self.agents:
            if exclude is not None and a.agent_id == exclude:
                continue
            caps.append((a.position[0], a.position[1], r, r, h - r))
        return caps

    def beacon_position(self) -> np.ndarray | None:
        if self.leader is None:
            return None
        return np.array([self.leader.position[0], self.leader.position[1],
                         self.agent_cfg.beacon_height])

    def clearance(self) -> float:
        """Distance from the robot footprint to the nearest obstacle or agent."""
        pos = self.robot.position
        r = self.robot_cfg.footprint_radius
        best = math.inf
        for b in self.world.boxes:
            q = np.minimum(np.maximum(pos, b.min_corner[:2]), b.max_corner[:2])
            inside = (b.min_corner[0] <= pos[0] <= b.max_corner[0]
                      and b.min_corner[1] <= pos[1] <= b.max_corner[1])
            d = -1.0 if inside else float(np.linalg.norm(pos - q))
            best = min(best, d - r)
        for c in self.world.cylinders:
            best = min(best, float(np.linalg.norm(pos - c.center)) - c.radius - r)
        for w in self.world.walls:
            e = w.end - w.start
            t = float(np.dot(pos - w.start, e) / np.dot(e, e))
            t = min(max(t, 0.0), 1.0)
            best = min(best, float(np.linalg.norm(pos - (w.start + t * e))) - r)
        for a in self.agents:
            best = min(best, float(np.linalg.norm(pos - a.position))
                       - self.agent_cfg.body_radius - r)
        return best
