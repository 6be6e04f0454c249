"""Sensor models: spinning LiDAR, a four-camera person detector ring, and
the beacon receiver producing raw TDM IQ snapshots.

All models are read-only over the world and draw noise from the generator
they are given, so the caller controls determinism.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .config import AgentConfig, CameraConfig, LidarConfig, RfConfig
from .geometry import ray_aabb, ray_capsule, ray_ground, ray_vertical_cylinder, ray_wall, wrap_angle
from .rf import ArrayGeometry, IQSnapshot
from .world import WorldSim


@dataclass(frozen=True)
class DetectionBox:
    camera_id: int
    bearing: float            # robot frame, radians
    angular_extent: float
    person_id: str            # ground truth, used by metrics only
    timestamp: float


@dataclass
class LidarScan:
    points: np.ndarray        # (n, 3) sensor frame: x forward, y left, z up
    timestamp: float


class LidarModel:
    def __init__(self, cfg: LidarConfig = LidarConfig()):
        self.cfg = cfg
        elev = np.deg2rad(np.linspace(cfg.elevation_min_deg, cfg.elevation_max_deg,
                                      cfg.channels))
        azim = np.deg2rad(np.arange(0.0, 360.0, cfg.azimuth_step_deg))
        az_grid, el_grid = np.meshgrid(azim, elev, indexing="ij")
        az_flat, el_flat = az_grid.ravel(), el_grid.ravel()
        ce = np.cos(el_flat)
        self._dirs = np.stack([ce * np.cos(az_flat), ce * np.sin(az_flat),
                               np.sin(el_flat)], axis=1)

    def scan(self, sim: WorldSim, rng: np.random.Generator,
             noise: bool = True) -> LidarScan:
        cfg = self.cfg
        robot = sim.robot
        c, s = math.cos(robot.yaw), math.sin(robot.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        dirs = self._dirs @ rot.T
        origin = np.array([robot.x, robot.y, cfg.height])

        t = ray_ground(origin, dirs)
        for bmin, bmax in sim.world.box_tuples():
            t = np.minimum(t, ray_aabb(origin, dirs, bmin, bmax))
        for cx, cy, r, z0, z1 in sim.world.cylinder_tuples():
            t = np.minimum(t, ray_vertical_cylinder(origin, dirs, cx, cy, r, z0, z1))
        for a, b, h in sim.world.wall_tuples():
            t = np.minimum(t, ray_wall(origin, dirs, a, b, h))
        for cx, cy, r, z0, z1 in sim.agent_capsules():
            t = np.minimum(t, ray_capsule(origin, dirs, cx, cy, r, z0, z1))

        hit = np.isfinite(t)
        ranges = t[hit]
        if noise and cfg.range_noise_std > 0.0:
            ranges = ranges + rng.normal(0.0, cfg.range_noise_std, len(ranges))
        keep = (ranges >= cfg.min_range) & (ranges <= cfg.max_range)
        points = self._dirs[hit][keep] * ranges[keep, None]
        return LidarScan(points=points, timestamp=sim.time)


def scan_to_world(scan: LidarScan, robot, height: float) -> np.ndarray:
    """Sensor-frame points to world frame given the robot pose."""
    c, s = math.cos(robot.yaw), math.sin(robot.yaw)
    p = scan.points
    out = np.empty_like(p)
    out[:, 0] = robot.x + c * p[:, 0] - s * p[:, 1]
    out[:, 1] = robot.y + s * p[:, 0] + c * p[:, 1]
    out[:, 2] = p[:, 2] + height
    return out


class CameraRing:
    """Four 90-degree cameras covering the full circle.

    Every unoccluded agent within range yields one bearing-only detection
    per frame; depth is left to LiDAR reprojection downstream.
    """

    def __init__(self, cfg: CameraConfig = CameraConfig(),
                 agent_cfg: AgentConfig = AgentConfig()):
        self.cfg = cfg
        self.agent_cfg = agent_cfg

    def detect(self, sim: WorldSim, rng: np.random.Generator) -> list:
        cfg = self.cfg
        robot = sim.robot
        origin = np.array([robot.x, robot.y, cfg.height])
        detections = []
        for agent in sim.agents:
            delta = agent.position - robot.position
            dist = float(np.linalg.norm(delta))
            if dist > cfg.max_range or dist < 1e-6:
                continue
            torso = np.array([agent.position[0], agent.position[1],
                              self.agent_cfg.torso_height])
            blocked = _segment_blocked(origin, torso, sim, exclude=agent.agent_id)
            if blocked:
                continue
            if rng.random() < cfg.false_negative_prob:
                continue
            bearing = wrap_angle(math.atan2(delta[1], delta[0]) - robot.yaw)
            sector = 2.0 * np.pi / cfg.count
            camera_id = int(np.round(bearing / sector)) % cfg.count
            noisy = wrap_angle(bearing + rng.normal(0.0, math.radians(cfg.bearing_noise_deg)))
            extent = 2.0 * math.asin(min(1.0, self.agent_cfg.body_radius / dist))
            detections.append(DetectionBox(camera_id=camera_id, bearing=float(noisy),
                                           angular_extent=float(extent),
                                           person_id=agent.agent_id,
                                           timestamp=sim.time))
        return detections


def _segment_blocked(p0, p1, sim: WorldSim, exclude: str) -> bool:
    from .geometry import segment_blocked
    return segment_blocked(p0, p1, sim.world.box_tuples(),
                           sim.world.cylinder_tuples(), sim.world.wall_tuples(),
                           sim.agent_capsules(exclude=exclude))


class BeaconChannel:
    """Simulated RF link from the carried beacon to the TDM array.

    Each propagation path is a spherical wavefront evaluated at the exact
    element positions (so near-field curvature and off-plane geometry show
    up naturally). Walls contribute first-order image sources with a fixed
    reflection coefficient; the strongest ones up to the configured count
    are kept. Per-slot switching jitter hits array and reference channels
    identically, which is what the downstream alignment relies on.
    """

    def __init__(self, cfg: RfConfig = RfConfig()):
        self.cfg = cfg
        self.geom = ArrayGeometry(cfg.ring_count, cfg.carrier_freq_hz)
        offsets = np.zeros(cfg.ring_count)
        if cfg.element_z_offsets is not None:
            offsets = np.asarray(cfg.element_z_offsets, dtype=float)[:cfg.ring_count]
        self._elem_local = self.geom.element_positions()
        self._elem_local[:, 2] += offsets
        self._k = 2.0 * np.pi / self.geom.wavelength

    def _paths(self, sim: WorldSim, beacon: np.ndarray, center: np.ndarray):
        paths = [(1.0, beacon)]
        candidates = []
        for wall in sim.world.walls:
            n = wall.normal()
            d = float(np.dot(beacon[:2] - wall.start, n))
            image = beacon.copy()
            image[:2] = beacon[:2] - 2.0 * d * n
            # specular point must land on the wall rectangle
            seg = image - center
            denom = float(np.dot(seg[:2], n))
            if abs(denom) < 1e-9:
                continue
            tt = float(np.dot(wall.start - center[:2], n)) / denom
            if not 0.0 < tt < 1.0:
                continue
            hit = center + tt * seg
            e = wall.end - wall.start
            srel = float(np.dot(hit[:2] - wall.start, e) / np.dot(e, e))
            if not 0.0 <= srel <= 1.0 or not 0.0 <= hit[2] <= wall.height:
                continue
            dist = float(np.linalg.norm(image - center))
            candidates.append((self.cfg.reflection_coeff / max(dist, 1e-6),
                               self.cfg.reflection_coeff, image))
        candidates.sort(key=lambda c: -c[0])
        for _, coeff, image in candidates[: self.cfg.max_reflections]:
            paths.append((coeff, image))
        return paths

    def snapshot(self, sim: WorldSim, rng: np.random.Generator) -> IQSnapshot:
        if sim.leader is None:
            raise ValueError("no beacon carrier in the world")
        cfg = self.cfg
        robot = sim.robot
        center = np.array([robot.x, robot.y, cfg.array_height])
        c, s = math.cos(robot.yaw), math.sin(robot.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        elements = center + self._elem_local @ rot.T
        beacon = sim.beacon_position()

        field_ring = np.zeros(cfg.ring_count, dtype=complex)
        field_ref = 0.0 + 0.0j
        for coeff, source in self._paths(sim, beacon, center):
            d_ring = np.linalg.norm(elements - source, axis=1)
            d_ref = float(np.linalg.norm(center - source))
            field_ring += coeff * np.exp(-1j * self._k * d_ring) / d_ring
            field_ref += coeff * cmath.exp(-1j * self._k * d_ref) / d_ref

        direct_range = float(np.linalg.norm(beacon - center))
        signal_amp = 1.0 / max(direct_range, 1e-6)
        noise_std = signal_amp / math.sqrt(2.0 * 10.0 ** (cfg.snr_db / 10.0))

        n = cfg.samples_per_slot
        cycle_phase = cmath.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
        jitter = rng.uniform(-cfg.slot_jitter_rad, cfg.slot_jitter_rad, cfg.ring_count)
        slots, refs = [], []
        for i in range(cfg.ring_count):
            common = cycle_phase * cmath.exp(1j * jitter[i])
            noise_a = (rng.normal(size=n) + 1j * rng.normal(size=n)) * noise_std
            noise_r = (rng.normal(size=n) + 1j * rng.normal(size=n)) * noise_std
            slots.append(field_ring[i] * common + noise_a)
            refs.append(field_ref * common + noise_r)
        return IQSnapshot(slot_samples=slots, reference_samples=refs,
                          slot_phase_jitter=jitter, timestamp=sim.time)

    def true_bearing(self, sim: WorldSim) -> float:
        """Ground-truth beacon azimuth in the robot frame."""
        beacon = sim.beacon_position()
        return float(wrap_angle(math.atan2(beacon[1] - sim.robot.y,
                                           beacon[0] - sim.robot.x) - sim.robot.yaw))
