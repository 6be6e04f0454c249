"""Constant-velocity EKF leader tracking over LiDAR point associations.

State is planar position and velocity. Measurements are centroids of the
scan points matched to the projected previous leader cloud, after large
planes are stripped and the spread-out tail of the association is rejected.
A bearing monitor compares the belief against the beacon and declares
divergence when they disagree for a sustained window.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import TrackerConfig
from .geometry import angle_diff, wrap_angle

log = logging.getLogger(__name__)


class TrackerStatus(enum.Enum):
    UNINITIALIZED = "UNINITIALIZED"
    TRACKING = "TRACKING"
    COASTING = "COASTING"
    DIVERGED = "DIVERGED"


@dataclass
class LeaderBelief:
    position: np.ndarray              # (x, y) world
    velocity: np.ndarray              # (x, y)
    covariance: np.ndarray            # 4x4, state order (x, y, vx, vy)
    points: np.ndarray                # (n, 3) leader points, world frame
    last_update: float

    def state(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


def make_belief(position, velocity, points, timestamp,
                cfg: TrackerConfig = TrackerConfig()) -> LeaderBelief:
    cov = np.diag([cfg.initial_pos_var, cfg.initial_pos_var,
                   cfg.initial_vel_var, cfg.initial_vel_var])
    return LeaderBelief(position=np.asarray(position, dtype=float).copy(),
                        velocity=np.asarray(velocity, dtype=float).copy(),
                        covariance=cov, points=np.asarray(points, dtype=float),
                        last_update=timestamp)


def ekf_predict(belief: LeaderBelief, dt: float,
                cfg: TrackerConfig = TrackerConfig()) -> LeaderBelief:
    if not 0.0 < dt <= 0.5:
        raise ValueError("prediction step must be in (0, 0.5] s")
    F = np.eye(4)
    F[0, 2] = dt
    F[1, 3] = dt
    Q = np.diag([cfg.process_noise_pos, cfg.process_noise_pos,
                 cfg.process_noise_vel, cfg.process_noise_vel]) * dt
    x = F @ belief.state()
    P = F @ belief.covariance @ F.T + Q
    return LeaderBelief(position=x[:2], velocity=x[2:], covariance=0.5 * (P + P.T),
                        points=belief.points, last_update=belief.last_update)


def ekf_update(belief: LeaderBelief, measurement, timestamp: float,
               cfg: TrackerConfig = TrackerConfig()):
    """Position update with an innovation gate.

    Returns (belief, accepted). A gated-out measurement leaves the state
    untouched so the filter keeps coasting on its motion model.
    """
    z = np.asarray(measurement, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement must be finite")
    H = np.zeros((2, 4))
    H[0, 0] = H[1, 1] = 1.0
    R = cfg.measurement_std ** 2 * np.eye(2)
    x = belief.state()
    P = belief.covariance
    innovation = z - H @ x
    S = H @ P @ H.T + R
    Sinv = np.linalg.inv(S)
    maha = float(innovation @ Sinv @ innovation)
    if maha > cfg.gate_mahalanobis:
        log.debug("measurement gated out (mahalanobis %.1f)", maha)
        return belief, False
    K = P @ H.T @ Sinv
    x = x + K @ innovation
    IKH = np.eye(4) - K @ H
    P = IKH @ P @ IKH.T + K @ R @ K.T
    speed = float(np.linalg.norm(x[2:]))
    if speed > cfg.max_speed:
        x[2:] *= cfg.max_speed / speed
    return LeaderBelief(position=x[:2], velocity=x[2:], covariance=0.5 * (P + P.T),
                        points=belief.points, last_update=timestamp), True


def remove_planes(points: np.ndarray, rng: np.random.Generator,
                  cfg: TrackerConfig = TrackerConfig()) -> np.ndarray:
    """Strip large planar structures (floor, walls) by iterative RANSAC.

    Only planes with at least plane_min_inliers supporters are removed, so
    human-sized clusters always survive.
    """
    pts = np.asarray(points)
    for _ in range(cfg.max_plane_removals):
        n = len(pts)
        if n < cfg.plane_min_inliers:
            return pts
        tri = rng.integers(0, n, size=(cfg.ransac_iterations, 3))
        p0, p1, p2 = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
        normals = np.cross(p1 - p0, p2 - p0)
        norms = np.linalg.norm(normals, axis=1)
        ok = norms > 1e-9
        normals[ok] /= norms[ok, None]
        normals[~ok] = np.array([0.0, 0.0, 1.0])
        offsets = -np.einsum("ij,ij->i", normals, p0)
        dist = np.abs(pts @ normals.T + offsets[None, :])
        inlier_counts = np.sum(dist <= cfg.plane_inlier_threshold, axis=0)
        best = int(np.argmax(inlier_counts))
        if inlier_counts[best] < cfg.plane_min_inliers:
            return pts
        pts = pts[dist[:, best] > cfg.plane_inlier_threshold]
    return pts


def associate_leader_points(prev_points: np.ndarray, predicted_center,
                            anchor_center, scan_points: np.ndarray,
                            rng: np.random.Generator,
                            cfg: TrackerConfig = TrackerConfig(),
                            wedge=None) -> np.ndarray:
    """Match the projected previous leader cloud into the current scan.

    Steps: project the stored points by the EKF-predicted displacement,
    strip large planes from the scan, match each projected point to its
    nearest scan neighbor inside the match radius, then drop the 40% of
    matched points farthest from the predicted center. Returns the surviving
    scan points (empty when the association is too thin, signalling a
    coasting cycle).
    """
    prev_points = np.asarray(prev_points)
    scan_points = np.asarray(scan_points)
    predicted_center = np.asarray(predicted_center, dtype=float)
    if len(prev_points) == 0 or len(scan_points) == 0:
        return np.empty((0, 3))

    shift = predicted_center - np.asarray(anchor_center, dtype=float)
    projected = prev_points.copy()
    projected[:, 0] += shift[0]
    projected[:, 1] += shift[1]

    near = scan_points
    if cfg.crop_radius > 0:
        d2 = (near[:, 0] - predicted_center[0]) ** 2 + \
             (near[:, 1] - predicted_center[1]) ** 2
        near = near[d2 <= cfg.crop_radius ** 2]
    if len(near) == 0:
        return np.empty((0, 3))
    near = remove_planes(near, rng, cfg)
    if len(near) == 0:
        return np.empty((0, 3))

    tree_projected = cKDTree(projected)

    def match(candidates):
        if len(candidates) == 0:
            return np.empty((0,), dtype=np.int64), candidates
        # neighborhood match: every scan point within the match radius of
        # some projected point joins the candidate set, so the cloud regrows
        # to the full body each cycle instead of shrinking under rejection
        dist, _ = tree_projected.query(candidates,
                                       distance_upper_bound=cfg.match_radius)
        return np.flatnonzero(np.isfinite(dist)), candidates

    candidates = near
    if wedge is not None:
        rx, ry, ryaw, center_bearing, extent = wedge
        bearing = np.arctan2(near[:, 1] - ry, near[:, 0] - rx) - ryaw
        candidates = near[np.abs(wrap_angle(bearing - center_bearing)) <= extent / 2.0]
    matched, candidates = match(candidates)
    if len(matched) < cfg.min_matches and wedge is not None:
        # the camera wedge assists association but must not starve it: a
        # stale bearing while the robot turns can crop the whole cluster
        matched, candidates = match(near)
    if len(matched) < cfg.min_matches:
        return np.empty((0, 3))
    pts = candidates[matched]
    center_dist = np.hypot(pts[:, 0] - predicted_center[0],
                           pts[:, 1] - predicted_center[1])
    keep = math.ceil((1.0 - cfg.reject_fraction) * len(pts))
    order = np.lexsort((np.arange(len(pts)), center_dist))
    return pts[order[:keep]]


def check_divergence(samples, belief_bearing: float, now: float,
                     cfg: TrackerConfig = TrackerConfig()) -> bool:
    """True when every confident beacon bearing in the window disagrees
    with the belief bearing and the disagreement spans the window.

    samples are (timestamp, world_bearing, low_confidence) tuples.
    """
    window_start = now - cfg.divergence_window
    gate = math.radians(cfg.divergence_angle_deg)
    confident = [(t, b) for t, b, low in samples if t >= window_start and not low]
    if len(confident) < 2:
        return False
    for _, bearing in confident:
        if abs(float(angle_diff(bearing, belief_bearing))) <= gate:
            return False
    # disagreement must persist for (nearly) the whole window
    return confident[0][0] <= window_start + 0.25


class LeaderTracker:
    """Belief owner running the 10 Hz predict/associate/update cycle."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.status = TrackerStatus.UNINITIALIZED
        self.belief: LeaderBelief | None = None
        self.last_position: np.ndarray | None = None
        self._anchor: np.ndarray | None = None
        self._last_cycle: float | None = None
        self._last_accept: float | None = None
        self.aoa_samples: list = []

    def initialize(self, seed, timestamp: float):
        self.belief = make_belief(seed.position, seed.velocity, seed.points,
                                  timestamp, self.cfg)
        self._anchor = self.belief.position.copy()
        self.status = TrackerStatus.TRACKING
        self._last_cycle = timestamp
        self._last_accept = timestamp
        self.last_position = self.belief.position.copy()

    def reset(self):
        self.status = TrackerStatus.UNINITIALIZED
        self.belief = None
        self._anchor = None
        self._last_cycle = None
        self._last_accept = None
        self.aoa_samples.clear()

    def add_aoa(self, timestamp: float, world_bearing: float, low_confidence: bool):
        self.aoa_samples.append((timestamp, world_bearing, low_confidence))
        horizon = self.cfg.divergence_window + 1.0
        while self.aoa_samples and self.aoa_samples[0][0] < timestamp - horizon:
            self.aoa_samples.pop(0)

    def cycle(self, scan_points_world, timestamp: float,
              rng: np.random.Generator, robot_pose=None, wedge=None):
        """One tracker tick. Returns the number of associated points."""
        if self.status in (TrackerStatus.UNINITIALIZED, TrackerStatus.DIVERGED):
            return 0
        dt = timestamp - self._last_cycle if self._last_cycle is not None else 0.0
        if dt > 0.0:
            self.belief = ekf_predict(self.belief, min(dt, 0.5), self.cfg)
        self._last_cycle = timestamp

        survivors = associate_leader_points(
            self.belief.points, self.belief.position, self._anchor,
            scan_points_world, rng, self.cfg, wedge=wedge)

        n = len(survivors)
        if n == 0:
            self._coast(timestamp)
        else:
            measurement = survivors[:, :2].mean(axis=0)
            self.belief, accepted = ekf_update(self.belief, measurement,
                                               timestamp, self.cfg)
            if accepted:
                self.belief.points = survivors
                self._anchor = self.belief.position.copy()
                self._last_accept = timestamp
                self.status = TrackerStatus.TRACKING
            else:
                self._coast(timestamp)

        self.last_position = self.belief.position.copy()

        if robot_pose is not None and self.status in (TrackerStatus.TRACKING,
                                                      TrackerStatus.COASTING):
            rx, ry = robot_pose[0], robot_pose[1]
            bearing = math.atan2(self.belief.position[1] - ry,
                                 self.belief.position[0] - rx)
            if check_divergence(self.aoa_samples, bearing, timestamp, self.cfg):
                log.info("tracker diverged from beacon bearing at t=%.2f", timestamp)
                self.status = TrackerStatus.DIVERGED
        return n

    def _coast(self, timestamp: float):
        if self.status == TrackerStatus.TRACKING:
            self.status = TrackerStatus.COASTING
        if self._last_accept is not None and \
                timestamp - self._last_accept > self.cfg.coast_timeout:
            log.info("coasting timed out at t=%.2f", timestamp)
            self.status = TrackerStatus.DIVERGED
