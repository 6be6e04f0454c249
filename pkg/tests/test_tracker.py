"""Tracker tests: EKF algebra against scalar/closed-form oracles, plane
removal, association with the 40% rejection rule, divergence monitoring,
and the status machine."""

import math

import numpy as np
import pytest

from followsim.config import LidarConfig, TrackerConfig
from followsim.fusion import SeedBelief
from followsim.sensors import LidarModel, scan_to_world
from followsim.tracker import (
    LeaderTracker,
    TrackerStatus,
    associate_leader_points,
    check_divergence,
    ekf_predict,
    ekf_update,
    make_belief,
    remove_planes,
)
from followsim.world import AgentState, RobotState, Wall, WorldModel, WorldSim

CFG = TrackerConfig()


def belief_at(px, py, vx, vy, n_points=30, t=0.0):
    pts = np.tile(np.array([[px, py, 1.0]]), (n_points, 1)) \
        + np.linspace(-0.2, 0.2, n_points)[:, None] * np.array([[0, 1, 0.5]])
    return make_belief([px, py], [vx, vy], pts, t, CFG)


# ---------------------------------------------------------------------------
# EKF predict
# ---------------------------------------------------------------------------

def test_predict_constant_velocity():
    b = ekf_predict(belief_at(0.0, 0.0, 1.0, 0.0), 0.1, CFG)
    assert np.allclose(b.position, [0.1, 0.0])
    assert np.allclose(b.velocity, [1.0, 0.0])


def test_predict_grows_uncertainty():
    b0 = belief_at(0.0, 0.0, 1.0, 0.0)
    b1 = ekf_predict(b0, 0.1, CFG)
    assert np.trace(b1.covariance) > np.trace(b0.covariance)
    evals = np.linalg.eigvalsh(b1.covariance)
    assert np.all(evals >= -1e-9)
    assert np.allclose(b1.covariance, b1.covariance.T)


def test_predict_composition_matches_single_step_mean():
    b = belief_at(1.0, -2.0, 0.7, 0.3)
    once = ekf_predict(b, 0.5, CFG)
    many = b
    for _ in range(10):
        many = ekf_predict(many, 0.05, CFG)
    assert np.allclose(once.position, many.position, atol=1e-12)
    assert np.allclose(once.velocity, many.velocity, atol=1e-12)


def test_predict_rejects_bad_dt():
    with pytest.raises(ValueError):
        ekf_predict(belief_at(0, 0, 0, 0), 0.0, CFG)
    with pytest.raises(ValueError):
        ekf_predict(belief_at(0, 0, 0, 0), 0.6, CFG)


# ---------------------------------------------------------------------------
# EKF update
# ---------------------------------------------------------------------------

def test_update_zero_innovation_keeps_state_shrinks_covariance():
    b = belief_at(2.0, 1.0, 0.5, 0.0)
    updated, accepted = ekf_update(b, [2.0, 1.0], 0.1, CFG)
    assert accepted
    assert np.allclose(updated.position, [2.0, 1.0])
    assert np.trace(updated.covariance) < np.trace(b.covariance)


def test_update_gates_out_wild_measurement():
    b = belief_at(0.0, 0.0, 0.0, 0.0)
    updated, accepted = ekf_update(b, [10.0, 0.0], 0.1, CFG)
    assert not accepted
    assert np.allclose(updated.position, b.position)


def test_update_matches_scalar_kalman_oracle():
    # hand-computed 1D filter: sigma_p^2 = P, gain K = P/(P+R)
    b = belief_at(0.0, 0.0, 0.0, 0.0)
    P0 = b.covariance[0, 0]
    R = CFG.measurement_std ** 2
    z = 0.3
    gain = P0 / (P0 + R)
    expected_x = gain * z
    expected_P = (1 - gain) ** 2 * P0 + gain ** 2 * R
    updated, _ = ekf_update(b, [z, 0.0], 0.1, CFG)
    assert updated.position[0] == pytest.approx(expected_x, abs=1e-9)
    assert updated.covariance[0, 0] == pytest.approx(expected_P, abs=1e-9)


def test_update_rejects_nonfinite():
    with pytest.raises(ValueError):
        ekf_update(belief_at(0, 0, 0, 0), [np.nan, 0.0], 0.1, CFG)


def test_filter_converges_on_noise_free_cv_target():
    b = belief_at(0.0, 0.1, 0.9, 0.0)       # slightly wrong start
    truth = np.array([0.0, 0.0])
    vel = np.array([1.0, 0.0])
    errs = []
    t = 0.0
    for k in range(12):
        t += 0.1
        truth_now = truth + vel * t
        b = ekf_predict(b, 0.1, CFG)
        b, acc = ekf_update(b, truth_now, t, CFG)
        assert acc
        errs.append(float(np.linalg.norm(b.position - truth_now)))
    assert errs[-1] < 0.01
    assert errs[-1] < errs[0]


def test_occlusion_coasting_extrapolation_exact():
    # zero process mismatch: pure prediction tracks a CV leader exactly
    b = belief_at(1.0, 1.0, 0.8, -0.4)
    for _ in range(10):
        b = ekf_predict(b, 0.1, CFG)
    truth = np.array([1.0, 1.0]) + np.array([0.8, -0.4]) * 1.0
    assert np.linalg.norm(b.position - truth) < 0.3
    assert np.linalg.norm(b.position - truth) < 1e-12


# ---------------------------------------------------------------------------
# plane removal and association
# ---------------------------------------------------------------------------

def scene_scan(agents, walls=()):
    world = WorldModel(aabb_min=[-30, -30, 0], aabb_max=[30, 30, 4],
                       walls=list(walls))
    sim = WorldSim(world, RobotState(), agents)
    scan = LidarModel().scan(sim, np.random.default_rng(0), noise=False)
    return scan_to_world(scan, sim.robot, LidarConfig().height)


def person(x, y, name="leader"):
    return AgentState(agent_id=name, position=np.array([x, y], dtype=float),
                      velocity=np.zeros(2))


def test_remove_planes_strips_ground_keeps_person():
    pts = scene_scan([person(3.0, 0.0)])
    kept = remove_planes(pts, np.random.default_rng(1), CFG)
    assert np.sum(pts[:, 2] < 0.05) > CFG.plane_min_inliers
    assert np.sum(kept[:, 2] < 0.05) < 0.02 * np.sum(pts[:, 2] < 0.05)
    body = kept[(np.hypot(kept[:, 0] - 3.0, kept[:, 1]) < 0.3) & (kept[:, 2] > 0.2)]
    assert len(body) > 50


def test_association_rejects_exactly_forty_percent():
    rng = np.random.default_rng(2)
    cluster = np.array([[3.0 + 0.01 * k, 0.0, 1.0] for k in range(6)])
    outliers = np.array([[3.45, 0.0, 1.0], [3.0, 0.45, 1.2],
                         [2.45, 0.0, 0.8], [3.0, -0.45, 1.1]])
    scan = np.vstack([cluster, outliers])
    prev = scan.copy()
    cfg = TrackerConfig(plane_min_inliers=500, min_matches=5)
    out = associate_leader_points(prev, [3.0, 0.0], [3.0, 0.0], scan, rng, cfg)
    assert len(out) == 6          # ceil(0.6 * 10)
    assert np.max(np.hypot(out[:, 0] - 3.0, out[:, 1])) < 0.2


def test_association_is_fixed_point_on_static_scene():
    pts = scene_scan([person(3.0, 0.0)])
    rng = np.random.default_rng(3)
    body = pts[(np.hypot(pts[:, 0] - 3.0, pts[:, 1]) < 0.3) & (pts[:, 2] > 0.2)]
    centroid = body[:, :2].mean(axis=0)
    out1 = associate_leader_points(body, centroid, centroid, pts, rng, CFG)
    out2 = associate_leader_points(out1, centroid, centroid, pts, rng, CFG)
    assert len(out1) >= CFG.min_matches
    drift = np.linalg.norm(out1[:, :2].mean(axis=0) - out2[:, :2].mean(axis=0))
    assert drift < 0.01


def test_association_drops_wall_points_via_plane_removal():
    wall = Wall([4.0, -4.0], [4.0, 4.0], height=2.5)
    pts = scene_scan([person(3.4, 0.0)], walls=[wall])
    rng = np.random.default_rng(4)
    body_guess = np.array([3.4, 0.0])
    prev = pts[(np.hypot(pts[:, 0] - 3.4, pts[:, 1]) < 0.3) & (pts[:, 2] > 0.2)
               & (pts[:, 0] < 3.9)]
    out = associate_leader_points(prev, body_guess, body_guess, pts, rng, CFG)
    assert len(out) >= CFG.min_matches
    # no survivor on the wall plane x=4
    assert np.all(np.abs(out[:, 0] - 4.0) > CFG.plane_inlier_threshold)


def test_association_empty_when_too_few_matches():
    rng = np.random.default_rng(5)
    prev = np.tile(np.array([[3.0, 0.0, 1.0]]), (8, 1))
    scan = np.tile(np.array([[9.0, 9.0, 1.0]]), (50, 1))
    out = associate_leader_points(prev, [3.0, 0.0], [3.0, 0.0], scan, rng, CFG)
    assert len(out) == 0


# ---------------------------------------------------------------------------
# divergence monitor
# ---------------------------------------------------------------------------

def samples(deg_list, t0=0.0, dt=0.2, low=False):
    return [(t0 + i * dt, math.radians(d), low) for i, d in enumerate(deg_list)]


def test_divergence_agreement_keeps_tracking():
    s = samples([0.0, 2.0, -3.0, 5.0, 1.0] * 2)
    assert not check_divergence(s, math.radians(0.0), now=2.0, cfg=CFG)


def test_divergence_sustained_disagreement():
    s = samples([90.0] * 11)
    assert check_divergence(s, math.radians(0.0), now=2.0, cfg=CFG)


def test_divergence_hysteresis_recent_agreement():
    s = samples([90.0] * 5 + [0.0] + [90.0] * 5)
    assert not check_divergence(s, math.radians(0.0), now=2.0, cfg=CFG)


def test_divergence_ignores_low_confidence():
    s = samples([90.0] * 11, low=True)
    assert not check_divergence(s, math.radians(0.0), now=2.0, cfg=CFG)


# ---------------------------------------------------------------------------
# status machine
# ---------------------------------------------------------------------------

def test_tracker_lifecycle_track_coast_recover():
    tracker = LeaderTracker(CFG)
    assert tracker.status is TrackerStatus.UNINITIALIZED
    pts = scene_scan([person(3.0, 0.0)])
    body = pts[(np.hypot(pts[:, 0] - 3.0, pts[:, 1]) < 0.3) & (pts[:, 2] > 0.2)]
    seed = SeedBelief(position=body[:, :2].mean(axis=0), velocity=np.zeros(2),
                      points=body, timestamp=0.0)
    tracker.initialize(seed, 0.0)
    assert tracker.status is TrackerStatus.TRACKING

    rng = np.random.default_rng(6)
    n = tracker.cycle(pts, 0.1, rng)
    assert tracker.status is TrackerStatus.TRACKING
    assert n >= CFG.min_matches

    empty = np.empty((0, 3))
    tracker.cycle(empty, 0.2, rng)
    assert tracker.status is TrackerStatus.COASTING

    tracker.cycle(pts, 0.3, rng)
    assert tracker.status is TrackerStatus.TRACKING


def test_tracker_coast_timeout_diverges():
    tracker = LeaderTracker(CFG)
    pts = scene_scan([person(3.0, 0.0)])
    body = pts[(np.hypot(pts[:, 0] - 3.0, pts[:, 1]) < 0.3) & (pts[:, 2] > 0.2)]
    seed = SeedBelief(position=body[:, :2].mean(axis=0), velocity=np.zeros(2),
                      points=body, timestamp=0.0)
    tracker.initialize(seed, 0.0)
    rng = np.random.default_rng(7)
    empty = np.empty((0, 3))
    t = 0.0
    for _ in range(40):
        t += 0.1
        tracker.cycle(empty, t, rng)
        if tracker.status is TrackerStatus.DIVERGED:
            break
    assert tracker.status is TrackerStatus.DIVERGED
    assert t <= CFG.coast_timeout + 0.2
    tracker.reset()
    assert tracker.status is TrackerStatus.UNINITIALIZED


def test_tracker_divergence_from_aoa_disagreement():
    tracker = LeaderTracker(CFG)
    pts = scene_scan([person(3.0, 0.0)])
    body = pts[(np.hypot(pts[:, 0] - 3.0, pts[:, 1]) < 0.3) & (pts[:, 2] > 0.2)]
    seed = SeedBelief(position=body[:, :2].mean(axis=0), velocity=np.zeros(2),
                      points=body, timestamp=0.0)
    tracker.initialize(seed, 0.0)
    rng = np.random.default_rng(8)
    t = 0.0
    for _ in range(25):
        t += 0.1
        if abs(t * 5 - round(t * 5)) < 1e-9:      # 5 Hz beacon updates
            tracker.add_aoa(t, math.radians(90.0), False)
        tracker.cycle(pts, t, rng, robot_pose=(0.0, 0.0))
        if tracker.status is TrackerStatus.DIVERGED:
            break
    assert tracker.status is TrackerStatus.DIVERGED
