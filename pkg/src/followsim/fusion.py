"""Leader identification: cross-reference camera detections with the beacon
bearing, lift the chosen detection to 3D through the LiDAR cloud, and
confirm the leader from two consistent hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import FusionConfig
from .geometry import angle_diff, wrap_angle
from .rf import AoAEstimate
from .sensors import DetectionBox


@dataclass
class LeaderHypothesis:
    position: np.ndarray          # (x, y, z) centroid of the cluster
    points: np.ndarray            # (n, 3) world frame
    source_detection: DetectionBox
    timestamp: float


@dataclass
class SeedBelief:
    """Initial leader parametrization: position, velocity guess and points."""
    position: np.ndarray          # (x, y)
    velocity: np.ndarray          # (x, y)
    points: np.ndarray
    timestamp: float


def match_detection_to_aoa(detections, aoa: AoAEstimate,
                           cfg: FusionConfig = FusionConfig()):
    """Detection whose bearing sits nearest the beacon azimuth, if inside
    the angular gate. Near-ties go to the wider (closer) detection."""
    if aoa.low_confidence:
        return None
    gate = math.radians(cfg.aoa_gate_deg)
    best = None
    best_err = None
    for det in detections:
        err = abs(float(angle_diff(det.bearing, aoa.azimuth)))
        if err > gate:
            continue
        if best is None or err < best_err - math.radians(0.1):
            best, best_err = det, err
        elif abs(err - best_err) <= math.radians(0.1) and \
                det.angular_extent > best.angular_extent:
            best, best_err = det, err
    return best


def extract_foreground_cluster(box: DetectionBox, scan_points_world: np.ndarray,
                               robot_pose, scan_timestamp: float,
                               cfg: FusionConfig = FusionConfig()):
    """First large mass inside the detection's bearing wedge.

    Wedge points at person heights are sorted by range and segmented at
    range gaps; the nearest cluster with enough points wins, its centroid
    becoming the leader position hypothesis.
    """
    rx, ry, ryaw = robot_pose
    pts = np.asarray(scan_points_world)
    if len(pts) == 0:
        return None
    dx = pts[:, 0] - rx
    dy = pts[:, 1] - ry
    bearing = np.arctan2(dy, dx) - ryaw
    half_width = box.angular_extent / 2.0 + cfg.wedge_margin
    in_wedge = np.abs(wrap_angle(bearing - box.bearing)) <= half_width
    in_band = (pts[:, 2] >= cfg.z_min) & (pts[:, 2] <= cfg.z_max)
    sel = pts[in_wedge & in_band]
    if len(sel) < cfg.min_cluster_points:
        return None
    ranges = np.hypot(sel[:, 0] - rx, sel[:, 1] - ry)
    order = np.argsort(ranges, kind="stable")
    sel, ranges = sel[order], ranges[order]
    gaps = np.flatnonzero(np.diff(ranges) > cfg.range_gap)
    starts = np.concatenate([[0], gaps + 1])
    ends = np.concatenate([gaps + 1, [len(sel)]])
    for s, e in zip(starts, ends):
        if e - s >= cfg.min_cluster_points:
            cluster = sel[s:e]
            return LeaderHypothesis(position=cluster.mean(axis=0), points=cluster,
                                    source_detection=box, timestamp=scan_timestamp)
    return None


def confirm_leader(h1: LeaderHypothesis, h2: LeaderHypothesis,
                   cfg: FusionConfig = FusionConfig()):
    """Two consistent hypotheses seed the belief; the displacement between
    them provides the initial planar velocity guess."""
    dt = h2.timestamp - h1.timestamp
    if dt <= 0.0 or dt > cfg.max_hypothesis_gap:
        return None
    displacement = h2.position[:2] - h1.position[:2]
    if float(np.linalg.norm(displacement)) > cfg.consistency_gate:
        return None
    return SeedBelief(position=h2.position[:2].copy(),
                      velocity=displacement / dt,
                      points=h2.points.copy(),
                      timestamp=h2.timestamp)
