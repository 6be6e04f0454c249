"""Reactive navigation as metric-weighted acceleration policies.

Each policy emits a desired acceleration and a PSD metric weighting its
directions of concern. Policies living in different spaces are brought into
the planar command space (x, y, yaw) either by zero-padded embedding or by
the pullback through the task map that drops the vertical axis. One least
squares solve combines everything into the acceleration that is integrated
into the next velocity reference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import FollowConfig, NavConfig
from .geometry import wrap_angle

log = logging.getLogger(__name__)


@dataclass
class PolicyOutput:
    accel: np.ndarray
    metric: np.ndarray

    def __post_init__(self):
        self.accel = np.atleast_1d(np.asarray(self.accel, dtype=float))
        self.metric = np.atleast_2d(np.asarray(self.metric, dtype=float))
        if self.metric.shape != (len(self.accel), len(self.accel)):
            raise ValueError("metric and acceleration dimensions disagree")
        if not np.all(np.isfinite(self.accel)) or not np.all(np.isfinite(self.metric)):
            raise ValueError("policy output must be finite")


def compute_follow_goal(leader_pos, leader_vel, cfg: FollowConfig,
                        last_heading: float, heading_blend: float = 1.0):
    """Set point beside the leader, predicted a little ahead.

    Returns (goal_xy, desired_yaw, heading): heading is the leader heading
    actually used, so the caller can feed it back as last_heading while the
    leader stands still. heading_blend < 1 rate-limits heading adoption so
    velocity-estimate transients (e.g. when the leader stops) cannot flip
    the set point to the other side of the leader in one tick.
    """
    leader_pos = np.asarray(leader_pos, dtype=float)
    leader_vel = np.asarray(leader_vel, dtype=float)
    speed = float(np.linalg.norm(leader_vel))
    if speed > cfg.min_heading_speed:
        target = math.atan2(leader_vel[1], leader_vel[0])
        heading = last_heading + heading_blend * float(wrap_angle(target - last_heading))
    else:
        heading = last_heading
    offset_angle = heading + cfg.bearing
    goal = leader_pos + leader_vel * cfg.lookahead + cfg.distance * np.array(
        [math.cos(offset_angle), math.sin(offset_angle)])
    to_leader = leader_pos - goal
    desired_yaw = math.atan2(to_leader[1], to_leader[0])
    return goal, desired_yaw, heading


def goal_policy(robot_pos, robot_vel, goal, cfg: NavConfig,
                goal_vel=(0.0, 0.0)) -> PolicyOutput:
    """Soft-normalized attractor with damping on the velocity error
    relative to the (moving) set point."""
    d = np.asarray(goal, dtype=float) - np.asarray(robot_pos, dtype=float)
    norm = float(np.linalg.norm(d))
    pull = cfg.goal_alpha * d / (norm + cfg.goal_softnorm)
    damp = cfg.goal_beta * (np.asarray(robot_vel, dtype=float) - np.asarray(goal_vel, dtype=float))
    return PolicyOutput(accel=pull - damp, metric=cfg.goal_metric * np.eye(2))


def yaw_policy(robot_pos, robot_yaw, robot_omega, goal, cfg: NavConfig) -> PolicyOutput:
    """Turn toward the goal; inactive when standing on top of it."""
    d = np.asarray(goal, dtype=float) - np.asarray(robot_pos, dtype=float)
    if float(np.linalg.norm(d)) <= cfg.yaw_min_range:
        return PolicyOutput(accel=np.zeros(1), metric=np.zeros((1, 1)))
    bearing = math.atan2(d[1], d[0])
    err = float(wrap_angle(bearing - robot_yaw))
    if err == -math.pi:   # wrap tie resolved toward +pi
        err = math.pi
    accel = cfg.yaw_alpha * err - cfg.yaw_beta * robot_omega
    return PolicyOutput(accel=np.array([accel]),
                        metric=np.array([[cfg.yaw_metric]]))


def _repulsor(closest_pts, robot_point, robot_vel, gain, length_scale,
              damping, eps, cutoff, centers=None, shell=None) -> PolicyOutput:
    """Shared repulsor core: exponential push away from each surface point,
    rank-one metric along the escape direction, metric-weighted merge.

    With a shell width, only surfaces within that band of the closest one
    participate: repulsion is a nearest-surface effect, and letting bulk
    volume vote would let a large distant wall out-weigh the goal."""
    p = np.asarray(robot_point, dtype=float)
    v = np.asarray(robot_vel, dtype=float)
    if len(closest_pts) == 0:
        return PolicyOutput(accel=np.zeros(3), metric=np.zeros((3, 3)))
    diff = p[None, :] - closest_pts
    dist = np.linalg.norm(diff, axis=1)
    keep = dist <= cutoff
    if shell is not None and np.any(keep):
        keep &= dist <= dist[keep].min() + shell
    if centers is not None:
        degenerate = dist < 1e-9
        diff[degenerate] = p[None, :] - centers[degenerate]
    diff, dist = diff[keep], dist[keep]
    if len(dist) == 0:
        return PolicyOutput(accel=np.zeros(3), metric=np.zeros((3, 3)))
    u = diff / np.maximum(dist[:, None], 1e-9)
    w = np.exp(-dist / length_scale)
    radial_vel = u @ v
    acc = gain * w[:, None] * u - damping * (w * radial_vel)[:, None] * u
    # A_i = w (u u^T + eps I); sum them and the weighted accelerations
    uu = np.einsum("ni,nj->nij", u, u)
    metrics = w[:, None, None] * (uu + eps * np.eye(3)[None, :, :])
    metric_sum = metrics.sum(axis=0)
    rhs = np.einsum("nij,nj->i", metrics, acc)
    accel = np.linalg.pinv(metric_sum, rcond=1e-8) @ rhs
    return PolicyOutput(accel=accel, metric=metric_sum)


def static_obstacle_policy(cubes, robot_point, robot_vel, cfg: NavConfig) -> PolicyOutput:
    """Repulsion from the multi-resolution obstacle cubes."""
    if not cubes:
        return PolicyOutput(accel=np.zeros(3), metric=np.zeros((3, 3)))
    p = np.asarray(robot_point, dtype=float)
    centers = np.array([c.center for c in cubes])
    half = np.array([c.side for c in cubes])[:, None] / 2.0
    closest = np.clip(p[None, :], centers - half, centers + half)
    return _repulsor(closest, p, robot_vel, cfg.obstacle_gain,
                     cfg.obstacle_length_scale, cfg.obstacle_damping,
                     cfg.metric_epsilon, cfg.obstacle_cutoff, centers=centers,
                     shell=cfg.obstacle_shell)


def dynamic_obstacle_policy(aabbs, robot_point, robot_vel, cfg: NavConfig,
                            leader_position=None) -> PolicyOutput:
    """Repulsion from buffered person boxes, inflated and tuned for a wider
    berth than static geometry. Boxes sitting on the tracked leader are
    skipped: the follow set point lives next to them by design."""
    boxes = []
    for bmin, bmax in aabbs:
        bmin = np.asarray(bmin, dtype=float)
        bmax = np.asarray(bmax, dtype=float)
        if leader_position is not None:
            center = 0.5 * (bmin[:2] + bmax[:2])
            if np.linalg.norm(center - np.asarray(leader_position)[:2]) \
                    <= cfg.leader_exclusion_radius:
                continue
        boxes.append((bmin - cfg.person_inflation, bmax + cfg.person_inflation))
    if not boxes:
        return PolicyOutput(accel=np.zeros(3), metric=np.zeros((3, 3)))
    p = np.asarray(robot_point, dtype=float)
    mins = np.array([b[0] for b in boxes])
    maxs = np.array([b[1] for b in boxes])
    closest = np.clip(p[None, :], mins, maxs)
    centers = 0.5 * (mins + maxs)
    return _repulsor(closest, p, robot_vel, cfg.person_gain,
                     cfg.person_length_scale, cfg.obstacle_damping,
                     cfg.metric_epsilon, cfg.obstacle_cutoff, centers=centers)


_PULLBACK_J = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])


def pullback_to_se2(policy: PolicyOutput) -> PolicyOutput:
    """Pull an (x, y, z) policy into (x, y, yaw) through the task map that
    pins the height: forces along z are dropped, yaw is untouched. The
    Jacobian is constant so no curvature term appears."""
    a = _PULLBACK_J.T @ (policy.metric @ policy.accel)
    m = _PULLBACK_J.T @ policy.metric @ _PULLBACK_J
    return PolicyOutput(accel=a, metric=m)


def embed_translation(policy: PolicyOutput) -> PolicyOutput:
    accel = np.zeros(3)
    accel[:2] = policy.accel
    metric = np.zeros((3, 3))
    metric[:2, :2] = policy.metric
    return PolicyOutput(accel=accel, metric=metric)


def embed_yaw(policy: PolicyOutput) -> PolicyOutput:
    accel = np.zeros(3)
    accel[2] = policy.accel[0]
    metric = np.zeros((3, 3))
    metric[2, 2] = policy.metric[0, 0]
    return PolicyOutput(accel=accel, metric=metric)


def combine_policies(policies) -> np.ndarray:
    """Metric-weighted average: the acceleration minimizing the sum of
    metric-weighted squared deviations from each policy's wish."""
    if not policies:
        raise ValueError("need at least one policy")
    dim = len(policies[0].accel)
    metric_sum = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    for p in policies:
        metric_sum += p.metric
        rhs += p.metric @ p.accel
    if np.allclose(metric_sum, 0.0):
        log.debug("all policy metrics are zero; coasting")
        return np.zeros(dim)
    # a' = Jt A f with the pseudo-inverse shrugging off null directions
    return np.linalg.pinv(metric_sum, rcond=1e-8) @ rhs


def combine_and_integrate(policies, velocity, dt: float, v_max: float,
                          omega_max: float) -> tuple:
    """Combine SE(2) policies and integrate one step into a clamped
    velocity reference (world-frame vx, vy and yaw rate)."""
    a_star = combine_policies(policies)
    v = np.asarray(velocity, dtype=float) + a_star * dt
    speed = float(np.hypot(v[0], v[1]))
    if speed > v_max:
        v[:2] *= v_max / speed
    v[2] = float(np.clip(v[2], -omega_max, omega_max))
    return v, a_star
