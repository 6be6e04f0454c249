"""Stage orchestration: owns the sensor models, the estimator chain, the
fusion handshake, the tracker, the occupancy map and the navigation state,
and exposes one method per pipeline stage for the runner's rate schedule.
"""

from __future__ import annotations

import json
import math
from collections import deque

import numpy as np

from .config import PipelineConfig
from .fusion import confirm_leader, extract_foreground_cluster, match_detection_to_aoa
from .geometry import angle_diff, body_to_world, wrap_angle, world_to_body
from .occupancy import HierarchicalOccupancy
from .rf import AoaEstimator
from .rmp import (
    combine_and_integrate,
    compute_follow_goal,
    dynamic_obstacle_policy,
    embed_translation,
    embed_yaw,
    goal_policy,
    pullback_to_se2,
    static_obstacle_policy,
    yaw_policy,
)
from .scenario import Scenario
from .sensors import BeaconChannel, CameraRing, LidarModel, scan_to_world
from .tracker import LeaderTracker, TrackerStatus
from .world import WorldSim


def _fmt(x: float) -> str:
    return repr(round(float(x), 9))


class LogSink:
    """Accumulates log lines per stream; the runner flushes them to disk."""

    def __init__(self):
        self.streams: dict[str, list] = {}

    def write(self, stream: str, line: str):
        self.streams.setdefault(stream, []).append(line)

    def text(self, stream: str) -> str:
        return "\n".join(self.streams.get(stream, [])) + "\n"


class FollowPipeline:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.cfg: PipelineConfig = scenario.config
        self.seed = scenario.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)

        self.sim = WorldSim(scenario.world, scenario.build_robot(),
                            scenario.build_agents(),
                            robot_cfg=self.cfg.robot, agent_cfg=self.cfg.agent)
        self.lidar = LidarModel(self.cfg.lidar)
        self.cameras = CameraRing(self.cfg.camera, self.cfg.agent)
        self.beacon = BeaconChannel(self.cfg.rf)
        self.estimator = AoaEstimator(self.cfg.rf)
        self.tracker = LeaderTracker(self.cfg.tracker)
        nav = self.cfg.nav
        self.occupancy = HierarchicalOccupancy(
            scenario.world.aabb_min, scenario.world.aabb_max,
            leaf_size=nav.leaf_size, levels=nav.map_levels,
            log_odds_hit=nav.log_odds_hit, log_odds_miss=nav.log_odds_miss,
            log_odds_clamp=nav.log_odds_clamp)

        self.logs = LogSink()
        self.logs.write("ground_truth",
                        "t,robot_x,robot_y,robot_yaw,clearance,beacon_bearing_robot,"
                        + ",".join(f"{a.agent_id}_x,{a.agent_id}_y" for a in self.sim.agents))
        self.logs.write("tracker", "t,px,py,vx,vy,trace_P,status,n_points")
        self.logs.write("aoa", "t,azimuth,confidence,low_confidence")

        self._scan_world: np.ndarray | None = None
        self._scan_time: float = -1.0
        self._latest_aoa = None
        self._latest_detections: list = []
        self._person_boxes: deque = deque()          # (bmin, bmax, t, is_leader)
        self._pending_hypothesis = None
        self._leader_detection = None                # (pose, bearing, extent, t)
        self._recovery_goal: np.ndarray | None = None
        self._last_heading: float | None = None
        self._diverged_events = 0
        self._nav_goal = None
        self._v_ref = np.zeros(3)          # integrated reference, world frame
        self._leader_vel_ema = np.zeros(2)

    # -- stage: physics (200 Hz) ------------------------------------------------

    def physics_tick(self, dt: float, t: float | None = None):
        self.sim.step(dt)
        if t is not None:
            # pin to the scheduler's exact tick grid so accumulated float
            # drift never leaks into timestamps
            self.sim.time = t
        self._log_ground_truth()

    def _log_ground_truth(self):
        sim = self.sim
        bearing = self.beacon.true_bearing(sim) if sim.leader is not None else 0.0
        fields = [_fmt(sim.time), _fmt(sim.robot.x), _fmt(sim.robot.y),
                  _fmt(sim.robot.yaw), _fmt(sim.clearance()), _fmt(bearing)]
        for a in sim.agents:
            fields.append(_fmt(a.position[0]))
            fields.append(_fmt(a.position[1]))
        self.logs.write("ground_truth", ",".join(fields))

    # -- stage: LiDAR (10 Hz) -----------------------------------------------------

    def lidar_tick(self, t: float):
        scan = self.lidar.scan(self.sim, self.rng)
        self._scan_world = scan_to_world(scan, self.sim.robot, self.cfg.lidar.height)
        self._scan_time = t
        boxes = [(b[0], b[1]) for b in self._current_person_boxes(t)]
        origin = np.array([self.sim.robot.x, self.sim.robot.y, self.cfg.lidar.height])
        self.occupancy.insert_scan(self._scan_world, origin, human_boxes=boxes,
                                   max_range=self.cfg.nav.insert_radius,
                                   carve_stride=self.cfg.nav.carve_azimuth_stride,
                                   min_z=self.cfg.nav.ground_clearance_z)

    def _current_person_boxes(self, t: float):
        horizon = self.cfg.nav.person_buffer_horizon
        while self._person_boxes and self._person_boxes[0][2] < t - horizon:
            self._person_boxes.popleft()
        margin = self.cfg.nav.human_removal_margin
        out = []
        for bmin, bmax, _, is_leader in self._person_boxes:
            out.append((bmin - margin, bmax + margin, is_leader))
        # always shield the tracked leader's own cloud from map insertion
        if self.tracker.belief is not None and len(self.tracker.belief.points):
            pts = self.tracker.belief.points
            out.append((pts.min(axis=0) - margin, pts.max(axis=0) + margin, True))
        return out

    # -- stage: cameras (15 Hz) ----------------------------------------------------

    def camera_tick(self, t: float):
        self._latest_detections = self.cameras.detect(self.sim, self.rng)
        scan_fresh = self._scan_world is not None and \
            t - self._scan_time <= self.cfg.fusion.max_scan_age
        if not scan_fresh:
            return
        pose = (self.sim.robot.x, self.sim.robot.y, self.sim.robot.yaw)

        belief = self.tracker.belief
        for det in self._latest_detections:
            hyp = extract_foreground_cluster(det, self._scan_world, pose,
                                             self._scan_time, self.cfg.fusion)
            if hyp is None:
                continue
            pad = 0.05
            # boxes on the tracked leader still mask map insertion but must
            # never repel: a walking leader would otherwise leave a wake of
            # buffered boxes between themselves and the robot
            is_leader = belief is not None and \
                np.linalg.norm(hyp.position[:2] - belief.position) \
                <= self.cfg.nav.leader_exclusion_radius
            self._person_boxes.append((hyp.points.min(axis=0) - pad,
                                       hyp.points.max(axis=0) + pad, t, is_leader))

        if self.tracker.status in (TrackerStatus.TRACKING, TrackerStatus.COASTING):
            self._update_leader_detection(t, pose)
        else:
            self._attempt_selection(t, pose)

    def _update_leader_detection(self, t: float, pose):
        belief = self.tracker.belief
        bearing = wrap_angle(math.atan2(belief.position[1] - pose[1],
                                        belief.position[0] - pose[0]) - pose[2])
        best, best_err = None, math.radians(10.0)
        for det in self._latest_detections:
            err = abs(float(angle_diff(det.bearing, bearing)))
            if err < best_err:
                best, best_err = det, err
        if best is not None:
            self._leader_detection = (pose, best.bearing, best.angular_extent, t)

    def _attempt_selection(self, t: float, pose):
        aoa = self._latest_aoa
        if aoa is None or aoa.low_confidence or \
                t - aoa.timestamp > self.cfg.fusion.max_aoa_age:
            return
        det = match_detection_to_aoa(self._latest_detections, aoa, self.cfg.fusion)
        if det is None:
            return
        hyp = extract_foreground_cluster(det, self._scan_world, pose,
                                         self._scan_time, self.cfg.fusion)
        if hyp is None:
            return
        pending = self._pending_hypothesis
        if pending is not None and \
                hyp.timestamp - pending.timestamp <= self.cfg.fusion.max_hypothesis_gap:
            seed = confirm_leader(pending, hyp, self.cfg.fusion)
            if seed is not None and hyp.timestamp > pending.timestamp:
                self.tracker.initialize(seed, t)
                self._pending_hypothesis = None
                self._recovery_goal = None
                self._last_heading = None
                return
        self._pending_hypothesis = hyp

    # -- stage: AoA (5 Hz) -----------------------------------------------------------

    def aoa_tick(self, t: float):
        if self.sim.leader is None:
            return
        snap = self.beacon.snapshot(self.sim, self.rng)
        estimate = self.estimator.process(snap)
        self._latest_aoa = estimate
        world_bearing = float(wrap_angle(self.sim.robot.yaw + estimate.azimuth))
        self.tracker.add_aoa(t, world_bearing, estimate.low_confidence)
        self.logs.write("aoa", ",".join([
            _fmt(t), _fmt(estimate.azimuth), _fmt(estimate.confidence),
            "1" if estimate.low_confidence else "0"]))

    # -- stage: tracker (10 Hz) --------------------------------------------------------

    def tracker_tick(self, t: float):
        if self.tracker.status not in (TrackerStatus.UNINITIALIZED,):
            wedge = None
            det = self._leader_detection
            if det is not None and t - det[3] <= self.cfg.tracker.detection_fresh_age:
                pose, bearing, extent, _ = det
                wedge = (pose[0], pose[1], pose[2], bearing, extent)
            scan = self._scan_world if self._scan_world is not None else np.empty((0, 3))
            pose_now = (self.sim.robot.x, self.sim.robot.y)
            n_points = self.tracker.cycle(scan, t, self.rng,
                                          robot_pose=pose_now, wedge=wedge)
        else:
            n_points = 0

        status = self.tracker.status
        if status == TrackerStatus.DIVERGED:
            self._diverged_events += 1
            self._recovery_goal = None if self.tracker.last_position is None \
                else self.tracker.last_position.copy()
            self._log_tracker(t, n_points)        # log the DIVERGED entry
            self.tracker.reset()
            self._pending_hypothesis = None
            self._leader_detection = None
            return
        self._log_tracker(t, n_points)

    def _log_tracker(self, t: float, n_points: int):
        b = self.tracker.belief
        if b is None:
            line = [_fmt(t), "0", "0", "0", "0", "0",
                    self.tracker.status.value, "0"]
        else:
            line = [_fmt(t), _fmt(b.position[0]), _fmt(b.position[1]),
                    _fmt(b.velocity[0]), _fmt(b.velocity[1]),
                    _fmt(np.trace(b.covariance)), self.tracker.status.value,
                    str(n_points)]
        self.logs.write("tracker", ",".join(line))

    # -- stage: navigation (50 Hz) ---------------------------------------------------------

    def nav_tick(self, t: float, dt: float):
        sim = self.sim
        robot = sim.robot
        nav = self.cfg.nav
        goal = None
        goal_vel = np.zeros(2)
        desired_yaw = None
        if self.tracker.status in (TrackerStatus.TRACKING, TrackerStatus.COASTING):
            belief = self.tracker.belief
            if self._last_heading is None:
                to_leader = belief.position - robot.position
                self._last_heading = math.atan2(to_leader[1], to_leader[0])
                self._leader_vel_ema = belief.velocity.copy()
            # smooth the belief velocity before it drives the set-point
            # heading: raw EKF velocity noise would flip "behind the leader"
            # to arbitrary directions whenever it crosses the speed threshold
            self._leader_vel_ema += 0.06 * (belief.velocity - self._leader_vel_ema)
            goal, desired_yaw, heading = compute_follow_goal(
                belief.position, self._leader_vel_ema, self.cfg.follow,
                self._last_heading, heading_blend=0.02)
            self._last_heading = heading
            goal_vel = self._leader_vel_ema
        elif self._recovery_goal is not None:
            # approach the last known target but stop a follow-distance
            # short: the lost leader may be standing right there
            to_target = self._recovery_goal - robot.position
            gap = float(np.linalg.norm(to_target))
            desired_yaw = math.atan2(to_target[1], to_target[0])
            if gap > self.cfg.follow.distance + 0.05:
                goal = self._recovery_goal - to_target / gap * self.cfg.follow.distance

        if goal is None:
            sim.set_robot_command(0.0, 0.0, 0.0)
            self._nav_goal = None
            self._v_ref = np.zeros(3)
            return None

        self._nav_goal = goal
        wvx, wvy = body_to_world(robot.vx, robot.vy, robot.yaw)
        body_point = np.array([robot.x, robot.y, nav.body_z])
        body_vel = np.array([wvx, wvy, 0.0])

        cubes = self.occupancy.query_cubes(body_point, bands=nav.query_bands)
        leader_pos = None
        if self.tracker.belief is not None:
            leader_pos = self.tracker.belief.position
        boxes = [(b[0], b[1]) for b in self._current_person_boxes(t) if not b[2]]

        p_goal = embed_translation(goal_policy(robot.position, [wvx, wvy], goal,
                                               nav, goal_vel=goal_vel))
        # near the set point the goal bearing is numerically erratic (and
        # the deadband's zero policy would leave an accumulated spin
        # undamped), so the yaw target falls back to facing the leader
        yaw_goal = goal
        if desired_yaw is not None and \
                float(np.linalg.norm(goal - robot.position)) < 0.5:
            yaw_goal = robot.position + np.array([math.cos(desired_yaw),
                                                  math.sin(desired_yaw)])
        p_yaw = embed_yaw(yaw_policy(robot.position, robot.yaw, robot.omega,
                                     yaw_goal, nav))
        p_static = pullback_to_se2(static_obstacle_policy(cubes, body_point, body_vel, nav))
        p_dyn = pullback_to_se2(dynamic_obstacle_policy(boxes, body_point, body_vel,
                                                        nav, leader_position=leader_pos))
        policies = [p_goal, p_yaw, p_static, p_dyn]
        # integrate the running reference (not the lagged actual velocity,
        # which would throttle the achievable acceleration by dt/lag)
        v, a_star = combine_and_integrate(policies, self._v_ref, dt,
                                          self.cfg.robot.v_max,
                                          self.cfg.robot.omega_max)
        self._v_ref = v

        bvx, bvy = world_to_body(v[0], v[1], robot.yaw)
        sim.set_robot_command(bvx, bvy, v[2])

        record = {
            "t": round(t, 6),
            "goal": [round(float(goal[0]), 6), round(float(goal[1]), 6)],
            "policies": {
                "goal": {"accel": _round3(p_goal.accel), "trace": round(float(np.trace(p_goal.metric)), 6)},
                "yaw": {"accel": _round3(p_yaw.accel), "trace": round(float(np.trace(p_yaw.metric)), 6)},
                "static": {"accel": _round3(p_static.accel), "trace": round(float(np.trace(p_static.metric)), 6)},
                "dynamic": {"accel": _round3(p_dyn.accel), "trace": round(float(np.trace(p_dyn.metric)), 6)},
            },
            "a_star": _round3(a_star),
            "v_ref": _round3(v),
            "n_cubes": len(cubes),
        }
        self.logs.write("nav", json.dumps(record, separators=(",", ":"), sort_keys=True))
        return record

    # -- state snapshot for the steering UI ---------------------------------------------------

    def state_message(self, t: float) -> dict:
        robot = self.sim.robot
        cubes = []
        if self._nav_goal is not None:
            for c in self.occupancy.query_cubes(
                    np.array([robot.x, robot.y, self.cfg.nav.body_z]),
                    bands=self.cfg.nav.query_bands):
                cubes.append({"x": round(c.center[0], 3), "y": round(c.center[1], 3),
                              "z": round(c.center[2], 3), "side": c.side})
        aoa = None
        if self._latest_aoa is not None:
            aoa = {"azimuth": round(self._latest_aoa.azimuth, 4),
                   "confidence": round(self._latest_aoa.confidence, 2),
                   "low_confidence": self._latest_aoa.low_confidence}
        belief = self.tracker.belief
        tracker = {"status": self.tracker.status.value,
                   "px": round(float(belief.position[0]), 3) if belief is not None else None,
                   "py": round(float(belief.position[1]), 3) if belief is not None else None}
        arrows = []
        nav_records = self.logs.streams.get("nav")
        if nav_records:
            last = json.loads(nav_records[-1])
            for name, pol in last["policies"].items():
                arrows.append({"name": name, "ax": pol["accel"][0], "ay": pol["accel"][1]})
            arrows.append({"name": "combined", "ax": last["a_star"][0],
                           "ay": last["a_star"][1]})
        return {
            "type": "state",
            "t": round(t, 4),
            "robot": {"x": round(robot.x, 4), "y": round(robot.y, 4),
                      "yaw": round(robot.yaw, 4)},
            "agents": [{"id": a.agent_id, "x": round(float(a.position[0]), 4),
                        "y": round(float(a.position[1]), 4),
                        "leader": a.carries_beacon} for a in self.sim.agents],
            "goal": None if self._nav_goal is None else
                    [round(float(self._nav_goal[0]), 4), round(float(self._nav_goal[1]), 4)],
            "cubes": cubes,
            "policy_arrows": arrows,
            "aoa": aoa,
            "tracker": tracker,
        }

    @property
    def diverged_events(self) -> int:
        return self._diverged_events


def _round3(vec) -> list:
    return [round(float(v), 6) for v in np.asarray(vec).ravel()]
