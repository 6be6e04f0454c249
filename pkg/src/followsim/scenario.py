"""Scenario files: strict JSON schema with defaults.

Unknown keys are rejected everywhere so typos fail loudly instead of
silently running a different experiment. All quantities are SI (meters,
seconds, radians) unless the key name says otherwise.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .world import AgentState, Box, Cylinder, RobotState, Wall, WorldModel

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass
class AgentSpec:
    agent_id: str
    start: tuple
    leader: bool = False
    heading: float = 0.0
    waypoints: list = field(default_factory=list)
    speed: float = 1.0
    interactive: bool = False


@dataclass
class Scenario:
    name: str
    duration: float
    seed: int
    world: WorldModel
    robot_start: tuple                     # (x, y, yaw)
    agents: list
    config: PipelineConfig
    schema_version: int = SCHEMA_VERSION

    def build_agents(self) -> list:
        out = []
        for spec in self.agents:
            out.append(AgentState(
                agent_id=spec.agent_id,
                position=np.array(spec.start, dtype=float),
                velocity=np.zeros(2),
                heading=spec.heading,
                carries_beacon=spec.leader,
                waypoints=[np.asarray(w, dtype=float) for w in spec.waypoints],
                speed=spec.speed,
                interactive=spec.interactive,
            ))
        return out

    def build_robot(self) -> RobotState:
        x, y, yaw = self.robot_start
        return RobotState(x=x, y=y, yaw=yaw)


def _require_keys(obj: dict, allowed: set, context: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{context}: unknown keys {sorted(unknown)}")


_REQUIRED = object()


def _get(obj: dict, key: str, kind, context: str, default=_REQUIRED):
    if key not in obj:
        if default is _REQUIRED:
            raise ScenarioError(f"{context}: missing required key '{key}'")
        return default
    value = obj[key]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, kind):
        raise ScenarioError(f"{context}.{key}: expected {kind.__name__}, "
                            f"got {type(value).__name__}")
    return value


def _parse_vec(value, n: int, context: str):
    if not isinstance(value, list) or len(value) != n or \
            not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ScenarioError(f"{context}: expected a list of {n} numbers")
    return tuple(float(v) for v in value)


def _parse_world(obj: dict) -> WorldModel:
    _require_keys(obj, {"aabb", "boxes", "cylinders", "walls"}, "world")
    aabb = _get(obj, "aabb", list, "world")
    if len(aabb) != 2:
        raise ScenarioError("world.aabb: expected [min, max] corner pair")
    amin = _parse_vec(aabb[0], 3, "world.aabb[0]")
    amax = _parse_vec(aabb[1], 3, "world.aabb[1]")
    boxes = []
    for i, b in enumerate(obj.get("boxes", [])):
        _require_keys(b, {"min", "max"}, f"world.boxes[{i}]")
        boxes.append(Box(_parse_vec(b["min"], 3, f"world.boxes[{i}].min"),
                         _parse_vec(b["max"], 3, f"world.boxes[{i}].max")))
    cylinders = []
    for i, c in enumerate(obj.get("cylinders", [])):
        _require_keys(c, {"center", "radius", "height"}, f"world.cylinders[{i}]")
        cylinders.append(Cylinder(_parse_vec(c["center"], 2, f"world.cylinders[{i}].center"),
                                  _get(c, "radius", float, f"world.cylinders[{i}]"),
                                  _get(c, "height", float, f"world.cylinders[{i}]")))
    walls = []
    for i, w in enumerate(obj.get("walls", [])):
        _require_keys(w, {"start", "end", "height"}, f"world.walls[{i}]")
        walls.append(Wall(_parse_vec(w["start"], 2, f"world.walls[{i}].start"),
                          _parse_vec(w["end"], 2, f"world.walls[{i}].end"),
                          _get(w, "height", float, f"world.walls[{i}]")))
    try:
        return WorldModel(aabb_min=np.array(amin), aabb_max=np.array(amax),
                          boxes=boxes, cylinders=cylinders, walls=walls)
    except ValueError as exc:
        raise ScenarioError(f"world: {exc}") from exc


def _parse_agent(obj: dict, index: int) -> AgentSpec:
    ctx = f"agents[{index}]"
    _require_keys(obj, {"id", "leader", "start", "heading", "path", "interactive"}, ctx)
    agent_id = _get(obj, "id", str, ctx)
    start = _parse_vec(_get(obj, "start", list, ctx), 2, f"{ctx}.start")
    leader = _get(obj, "leader", bool, ctx, default=False)
    heading = _get(obj, "heading", float, ctx, default=0.0)
    interactive = _get(obj, "interactive", bool, ctx, default=False)
    waypoints, speed = [], 1.0
    if "path" in obj:
        if interactive:
            raise ScenarioError(f"{ctx}: 'path' and 'interactive' are exclusive")
        path = obj["path"]
        _require_keys(path, {"waypoints", "speed"}, f"{ctx}.path")
        speed = _get(path, "speed", float, f"{ctx}.path", default=1.0)
        wp = _get(path, "waypoints", list, f"{ctx}.path")
        waypoints = [_parse_vec(w, 2, f"{ctx}.path.waypoints[{j}]")
                     for j, w in enumerate(wp)]
    if speed <= 0 or speed > 2.5:
        raise ScenarioError(f"{ctx}.path.speed: must be in (0, 2.5] m/s")
    return AgentSpec(agent_id=agent_id, start=start, leader=leader, heading=heading,
                     waypoints=waypoints, speed=speed, interactive=interactive)


def _parse_config(obj: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    sections = {f.name: f for f in dataclasses.fields(PipelineConfig)
                if f.name != "physics_rate_hz"}
    _require_keys(obj, set(sections), "config")
    updates = {}
    for section, params in obj.items():
        block = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(block)}
        _require_keys(params, names, f"config.{section}")
        coerced = {}
        for key, value in params.items():
            if isinstance(value, list):
                value = tuple(value)
            coerced[key] = value
        try:
            updates[section] = dataclasses.replace(block, **coerced)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"config.{section}: {exc}") from exc
    return dataclasses.replace(cfg, **updates)


def parse_scenario(obj: dict, name: str = "scenario") -> Scenario:
    top = {"schema_version", "name", "duration", "seed", "world", "robot",
           "agents", "config", "follow"}
    _require_keys(obj, top, "scenario")
    version = _get(obj, "schema_version", int, "scenario")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: expected {SCHEMA_VERSION}, got {version}")
    duration = _get(obj, "duration", float, "scenario")
    if duration <= 0:
        raise ScenarioError("duration: must be positive")
    seed = _get(obj, "seed", int, "scenario", default=0)
    world = _parse_world(_get(obj, "world", dict, "scenario"))

    robot = _get(obj, "robot", dict, "scenario")
    _require_keys(robot, {"start"}, "robot")
    robot_start = _parse_vec(_get(robot, "start", list, "robot"), 3, "robot.start")

    agents_raw = _get(obj, "agents", list, "scenario")
    agents = [_parse_agent(a, i) for i, a in enumerate(agents_raw)]
    leaders = [a for a in agents if a.leader]
    if len(leaders) != 1:
        raise ScenarioError(f"agents: exactly one leader required, found {len(leaders)}")
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ScenarioError("agents: ids must be unique")

    for i, a in enumerate(agents):
        for j, w in enumerate(a.waypoints):
            if not (world.aabb_min[0] <= w[0] <= world.aabb_max[0]
                    and world.aabb_min[1] <= w[1] <= world.aabb_max[1]):
                raise ScenarioError(
                    f"agents[{i}].path.waypoints[{j}]: {list(w)} outside world AABB")

    config = _parse_config(obj.get("config", {}))
    if "follow" in obj:
        follow = obj["follow"]
        names = {f.name for f in dataclasses.fields(config.follow)}
        _require_keys(follow, names, "follow")
        config = dataclasses.replace(
            config, follow=dataclasses.replace(config.follow, **follow))

    return Scenario(name=_get(obj, "name", str, "scenario", default=name),
                    duration=duration, seed=seed, world=world,
                    robot_start=robot_start, agents=agents, config=config,
                    schema_version=version)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return parse_scenario(obj, name=path.stem)
