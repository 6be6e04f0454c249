"""Central configuration blocks.

Every tunable of the pipeline lives here so scenario files can override a
single namespace and experiments stay reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class RfConfig:
    """AoA sensor chain parameters."""

    ring_count: int = 8
    carrier_freq_hz: float = 2.4e9
    samples_per_slot: int = 64
    mode_order: int = 3
    n_subarrays: int = 3
    covariance_window: int = 5        # aligned snapshots per covariance
    grid_step_deg: float = 0.5
    confidence_threshold: float = 2.0  # peak/mean below this flags the estimate
    rank_fraction: float = 0.05        # eigenvalue fraction counted as signal
    rate_hz: float = 5.0
    snr_db: float = 10.0
    reflection_coeff: float = 0.5
    max_reflections: int = 2
    slot_jitter_rad: float = 0.3       # per-slot common phase, uniform +-
    array_height: float = 0.9          # mast height above ground
    # static vertical mounting offsets of the ring elements (meters); the
    # estimator never sees these, they only shape off-plane degradation
    element_z_offsets: tuple = (0.004, -0.0032, 0.0051, 0.0012,
                                -0.0045, 0.0028, -0.0019, 0.0036)


@dataclass(frozen=True)
class LidarConfig:
    channels: int = 16
    elevation_min_deg: float = -15.0
    elevation_max_deg: float = 15.0
    azimuth_step_deg: float = 0.4
    min_range: float = 0.3
    max_range: float = 50.0
    range_noise_std: float = 0.015
    height: float = 0.5
    rate_hz: float = 10.0


@dataclass(frozen=True)
class CameraConfig:
    count: int = 4
    fov_deg: float = 90.0
    max_range: float = 8.0
    bearing_noise_deg: float = 1.0
    false_negative_prob: float = 0.05
    height: float = 0.5
    rate_hz: float = 15.0


@dataclass(frozen=True)
class RobotConfig:
    v_max: float = 1.2
    omega_max: float = 1.5
    lag_time_constant: float = 0.3
    footprint_radius: float = 0.3


@dataclass(frozen=True)
class FusionConfig:
    aoa_gate_deg: float = 20.0
    min_cluster_points: int = 20
    range_gap: float = 0.4            # cluster segmentation gap
    z_min: float = 0.2
    z_max: float = 2.0
    wedge_margin: float = 0.035       # extraction wedge widening (rad), ~2 deg
    consistency_gate: float = 0.8     # max centroid displacement between hypotheses
    max_hypothesis_gap: float = 1.0
    max_scan_age: float = 0.2
    max_aoa_age: float = 0.4


@dataclass(frozen=True)
class TrackerConfig:
    rate_hz: float = 10.0
    process_noise_pos: float = 0.01   # qp, m^2/s
    process_noise_vel: float = 0.5    # qv, m^2/s^3
    measurement_std: float = 0.1
    gate_mahalanobis: float = 9.21    # chi^2, 2 dof, 99%
    match_radius: float = 0.5
    reject_fraction: float = 0.4
    min_matches: int = 10
    plane_inlier_threshold: float = 0.05
    plane_min_inliers: int = 500
    max_plane_removals: int = 4
    ransac_iterations: int = 32
    crop_radius: float = 10.0         # scan crop around predicted leader
    divergence_angle_deg: float = 30.0
    divergence_window: float = 2.0
    coast_timeout: float = 3.0
    max_speed: float = 3.0
    initial_pos_var: float = 0.04
    initial_vel_var: float = 0.25
    detection_fresh_age: float = 0.15


@dataclass(frozen=True)
class FollowConfig:
    distance: float = 1.5
    bearing: float = math.pi          # behind the leader
    lookahead: float = 0.5
    min_heading_speed: float = 0.2


@dataclass(frozen=True)
class NavConfig:
    rate_hz: float = 50.0
    # goal attractor: soft-normalized pull with damping on the velocity
    # error relative to the moving set point
    goal_alpha: float = 4.0
    goal_beta: float = 4.0
    goal_softnorm: float = 0.8
    goal_metric: float = 1.0
    yaw_alpha: float = 3.0
    yaw_beta: float = 4.0
    yaw_metric: float = 0.5
    yaw_min_range: float = 0.1
    # static repulsors: short length scale keeps a wide wall's aggregate
    # metric from out-voting the goal at range
    obstacle_gain: float = 16.0
    obstacle_length_scale: float = 0.2
    obstacle_damping: float = 2.0
    metric_epsilon: float = 0.001
    obstacle_cutoff: float = 2.5
    obstacle_shell: float = 0.5       # only surfaces this close to the nearest one repel
    # dynamic (person) repulsors
    person_gain: float = 6.0
    person_length_scale: float = 1.5
    person_inflation: float = 0.3
    person_buffer_horizon: float = 1.0
    leader_exclusion_radius: float = 0.75
    # occupancy map
    leaf_size: float = 0.1
    map_levels: int = 4
    log_odds_hit: float = 0.85
    log_odds_miss: float = -0.4
    log_odds_clamp: float = 4.0
    query_bands: tuple = (1.0, 2.5, 5.0)   # band edges for 0.1/0.2/0.4 m cells
    insert_radius: float = 5.5             # map insertion window around robot
    ground_clearance_z: float = 0.15       # traversable-floor cutoff for hits
    carve_azimuth_stride: int = 4
    human_removal_margin: float = 0.1
    pinv_cutoff: float = 1e-8
    body_z: float = 0.5                    # robot body point for 3D repulsors


@dataclass(frozen=True)
class AgentConfig:
    body_radius: float = 0.25
    body_height: float = 1.75
    max_speed: float = 2.5
    beacon_height: float = 0.9
    torso_height: float = 1.0


@dataclass(frozen=True)
class PipelineConfig:
    """Bundle of all stage configs plus the simulation clock layout."""

    physics_rate_hz: float = 200.0
    rf: RfConfig = field(default_factory=RfConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    follow: FollowConfig = field(default_factory=FollowConfig)
    nav: NavConfig = field(default_factory=NavConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
