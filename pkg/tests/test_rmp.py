"""Policy tests: follow set-point geometry, attractor/repulsor structure,
pullback algebra, and metric-weighted combination against an independent
least-squares oracle."""

import math

import numpy as np
import pytest

from followsim.config import FollowConfig, NavConfig
from followsim.occupancy import ObstacleCube
from followsim.rmp import (
    PolicyOutput,
    combine_policies,
    compute_follow_goal,
    dynamic_obstacle_policy,
    goal_policy,
    pullback_to_se2,
    static_obstacle_policy,
    yaw_policy,
)

NAV = NavConfig()
FOLLOW = FollowConfig()


# ---------------------------------------------------------------------------
# follow goal
# ---------------------------------------------------------------------------

def test_follow_goal_behind_static_leader():
    goal, yaw, heading = compute_follow_goal([0.0, 0.0], [0.0, 0.0], FOLLOW,
                                             last_heading=0.0)
    assert np.allclose(goal, [-1.5, 0.0])
    assert yaw == pytest.approx(0.0)      # facing the leader from the goal
    assert heading == pytest.approx(0.0)


def test_follow_goal_beside_leader():
    cfg = FollowConfig(bearing=math.pi / 2)
    goal, _, _ = compute_follow_goal([0.0, 0.0], [0.0, 0.0], cfg, last_heading=0.0)
    assert np.allclose(goal, [0.0, 1.5])


def test_follow_goal_lookahead_shift():
    goal, _, _ = compute_follow_goal([0.0, 0.0], [1.0, 0.0], FOLLOW, last_heading=0.0)
    assert np.allclose(goal, [-1.0, 0.0])   # -1.5 offset + 0.5 lookahead


def test_follow_goal_keeps_last_heading_when_slow():
    _, _, heading = compute_follow_goal([0.0, 0.0], [0.05, 0.05], FOLLOW,
                                        last_heading=1.1)
    assert heading == pytest.approx(1.1)


# ---------------------------------------------------------------------------
# attractors
# ---------------------------------------------------------------------------

def test_goal_policy_fixed_point():
    out = goal_policy([2.0, 1.0], [0.0, 0.0], [2.0, 1.0], NAV)
    assert np.allclose(out.accel, 0.0)


def test_goal_policy_softnorm_saturation():
    out = goal_policy([0.0, 0.0], [0.0, 0.0], [1000.0, 0.0], NAV)
    assert np.linalg.norm(out.accel) == pytest.approx(NAV.goal_alpha, rel=1e-3)


def test_goal_policy_unit_displacement():
    out = goal_policy([0.0, 0.0], [0.0, 0.0], [1.0, 0.0], NAV)
    assert np.linalg.norm(out.accel) == pytest.approx(NAV.goal_alpha / (1.0 + NAV.goal_softnorm))


def test_yaw_policy_aligned_is_zero():
    out = yaw_policy([0.0, 0.0], 0.0, 0.0, [2.0, 0.0], NAV)
    assert out.accel[0] == pytest.approx(0.0)


def test_yaw_policy_quarter_turn():
    out = yaw_policy([0.0, 0.0], 0.0, 0.0, [0.0, 2.0], NAV)
    assert out.accel[0] == pytest.approx(NAV.yaw_alpha * math.pi / 2)


def test_yaw_policy_wrap_tie_positive():
    out = yaw_policy([0.0, 0.0], 0.0, 0.0, [-2.0, 0.0], NAV)
    assert out.accel[0] == pytest.approx(NAV.yaw_alpha * math.pi)


def test_yaw_policy_zero_inside_deadband():
    out = yaw_policy([0.0, 0.0], 0.5, 0.3, [0.05, 0.0], NAV)
    assert np.allclose(out.accel, 0.0)
    assert np.allclose(out.metric, 0.0)


# ---------------------------------------------------------------------------
# repulsors
# ---------------------------------------------------------------------------

def cube_at(x, y, z=0.5, side=0.2):
    return ObstacleCube(center=(x, y, z), side=side)


def test_static_policy_empty():
    out = static_obstacle_policy([], np.array([0, 0, 0.5]), np.zeros(3), NAV)
    assert np.allclose(out.accel, 0.0)
    assert np.allclose(out.metric, 0.0)


def test_static_policy_pushes_away_from_approach():
    robot = np.array([0.0, 0.0, 0.5])
    vel = np.array([1.0, 0.0, 0.0])
    out = static_obstacle_policy([cube_at(0.6, 0.0)], robot, vel, NAV)
    assert out.accel[0] < 0.0                      # away from the cube
    evals, evecs = np.linalg.eigh(out.metric)
    principal = evecs[:, -1]
    assert abs(principal[0]) > 0.99                # dominant along approach axis


def test_static_policy_symmetric_cubes_cancel_laterally():
    robot = np.array([0.0, 0.0, 0.5])
    cubes = [cube_at(0.5, 0.6), cube_at(0.5, -0.6)]
    out = static_obstacle_policy(cubes, robot, np.zeros(3), NAV)
    assert abs(out.accel[1]) < 1e-9
    assert out.accel[0] < 0.0


def test_static_policy_two_cube_closed_form():
    # symmetric pair: net acceleration is the metric-weighted mean of the
    # two individual contributions, computed here explicitly
    robot = np.array([0.0, 0.0, 0.5])
    cubes = [cube_at(0.5, 0.6), cube_at(0.5, -0.6)]
    singles = [static_obstacle_policy([c], robot, np.zeros(3), NAV) for c in cubes]
    stacked_metric = sum(p.metric for p in singles)
    stacked_rhs = sum(p.metric @ p.accel for p in singles)
    expected = np.linalg.pinv(stacked_metric, rcond=1e-8) @ stacked_rhs
    out = static_obstacle_policy(cubes, robot, np.zeros(3), NAV)
    assert np.allclose(out.accel, expected, atol=1e-9)


def test_static_policy_ignores_far_cubes():
    robot = np.array([0.0, 0.0, 0.5])
    out = static_obstacle_policy([cube_at(20.0, 0.0)], robot, np.zeros(3), NAV)
    assert np.allclose(out.accel, 0.0)


def test_repulsor_radial_sign_property():
    rng = np.random.default_rng(2)
    for _ in range(100):
        offset = rng.uniform(0.3, 3.0 * NAV.obstacle_length_scale)
        angle = rng.uniform(-np.pi, np.pi)
        cube = cube_at(offset * math.cos(angle), offset * math.sin(angle))
        robot = np.array([0.0, 0.0, 0.5])
        out = static_obstacle_policy([cube], robot, np.zeros(3), NAV)
        away = robot - np.array(cube.center)
        away[2] = 0.0
        radial = float(out.accel @ away / max(np.linalg.norm(away), 1e-9))
        assert radial > 0.0


def test_dynamic_policy_empty_and_leader_exclusion():
    robot = np.array([0.0, 0.0, 0.5])
    out = dynamic_obstacle_policy([], robot, np.zeros(3), NAV)
    assert np.allclose(out.accel, 0.0)
    leader_box = [(np.array([0.8, -0.3, 0.0]), np.array([1.4, 0.3, 1.8]))]
    out = dynamic_obstacle_policy(leader_box, robot, np.zeros(3), NAV,
                                  leader_position=np.array([1.1, 0.0]))
    assert np.allclose(out.accel, 0.0)


def test_dynamic_repulsion_exceeds_static_at_same_range():
    robot = np.array([0.0, 0.0, 0.5])
    vel = np.zeros(3)
    box = [(np.array([0.9, -0.1, 0.0]), np.array([1.1, 0.1, 1.8]))]
    cube = [ObstacleCube(center=(1.0, 0.0, 0.5), side=0.2)]
    dyn = dynamic_obstacle_policy(box, robot, vel, NAV)
    sta = static_obstacle_policy(cube, robot, vel, NAV)
    assert np.linalg.norm(dyn.accel) > np.linalg.norm(sta.accel)


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------

def test_pullback_isotropic_projection():
    p = PolicyOutput(accel=np.array([1.0, 2.0, 5.0]), metric=np.eye(3))
    out = pullback_to_se2(p)
    assert np.allclose(out.accel, [1.0, 2.0, 0.0])
    assert np.allclose(out.metric, np.diag([1.0, 1.0, 0.0]))


def test_pullback_zero():
    p = PolicyOutput(accel=np.zeros(3), metric=np.zeros((3, 3)))
    out = pullback_to_se2(p)
    assert np.allclose(out.accel, 0.0)
    assert np.allclose(out.metric, 0.0)


def test_pullback_anisotropic_matrix_oracle():
    A = np.diag([1.0, 4.0, 9.0])
    f = np.array([1.0, 1.0, 1.0])
    J = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0]])
    out = pullback_to_se2(PolicyOutput(accel=f, metric=A))
    assert np.allclose(out.accel, J.T @ A @ f)
    assert np.allclose(out.accel, [1.0, 4.0, 0.0])
    assert np.allclose(out.metric, np.diag([1.0, 4.0, 0.0]))


# ---------------------------------------------------------------------------
# combination
# ---------------------------------------------------------------------------

def se2(accel, metric):
    return PolicyOutput(accel=np.asarray(accel, dtype=float),
                        metric=np.asarray(metric, dtype=float))


def test_combine_single_identity():
    p = se2([0.3, -0.1, 0.7], np.eye(3))
    assert np.allclose(combine_policies([p]), p.accel)


def test_combine_equal_metrics_average():
    a = se2([1.0, 0.0, 0.0], np.eye(3))
    b = se2([0.0, 1.0, 0.0], np.eye(3))
    assert np.allclose(combine_policies([a, b]), [0.5, 0.5, 0.0])


def test_combine_block_separable():
    a = se2([1.0, 0.0, 0.0], np.diag([1.0, 0.0, 0.0]))
    b = se2([0.0, 2.0, 0.0], np.diag([0.0, 1.0, 0.0]))
    assert np.allclose(combine_policies([a, b]), [1.0, 2.0, 0.0])


def test_combine_all_zero_metrics():
    a = se2([5.0, 5.0, 5.0], np.zeros((3, 3)))
    assert np.allclose(combine_policies([a]), 0.0)


def brute_force_weighted_lsq(policies):
    """Stack sqrt-metric rows and solve the raw least-squares problem:
    an independent route to argmin sum (a - a_i)^T A_i (a - a_i)."""
    import scipy.linalg
    rows, rhs = [], []
    for p in policies:
        root = scipy.linalg.sqrtm(p.metric).real
        rows.append(root)
        rhs.append(root @ p.accel)
    sol, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return sol


def random_psd(rng, dim=3, rank=None):
    m = rng.normal(size=(dim, dim))
    a = m @ m.T
    if rank is not None and rank < dim:
        evals, evecs = np.linalg.eigh(a)
        evals[: dim - rank] = 0.0
        a = evecs @ np.diag(evals) @ evecs.T
    return a


def test_combination_matches_least_squares_oracle():
    rng = np.random.default_rng(42)
    for _ in range(200):
        policies = [se2(rng.normal(size=3), random_psd(rng))
                    for _ in range(rng.integers(1, 5))]
        got = combine_policies(policies)
        want = brute_force_weighted_lsq(policies)
        scale = max(np.linalg.norm(want), 1.0)
        assert np.linalg.norm(got - want) / scale < 1e-8


def test_combination_scale_covariance():
    rng = np.random.default_rng(9)
    policies = [se2(rng.normal(size=3), random_psd(rng)) for _ in range(3)]
    base = combine_policies(policies)
    scaled = [se2(p.accel, 37.5 * p.metric) for p in policies]
    assert np.allclose(combine_policies(scaled), base, atol=1e-10)


def test_combine_and_integrate_clamps_reference():
    from followsim.rmp import combine_and_integrate
    strong = se2([100.0, 0.0, 0.0], np.eye(3))
    v, a_star = combine_and_integrate([strong], [1.1, 0.0, 0.0], dt=0.02,
                                      v_max=1.2, omega_max=1.5)
    assert np.hypot(v[0], v[1]) == pytest.approx(1.2)
    assert a_star[0] == pytest.approx(100.0)
    spin = se2([0.0, 0.0, 200.0], np.diag([0.0, 0.0, 1.0]))
    v, _ = combine_and_integrate([spin], [0.0, 0.0, 0.0], dt=0.02,
                                 v_max=1.2, omega_max=1.5)
    assert v[2] == pytest.approx(1.5)


def test_combine_and_integrate_plain_step():
    from followsim.rmp import combine_and_integrate
    p = se2([0.5, -0.25, 0.1], np.eye(3))
    v, a_star = combine_and_integrate([p], [0.1, 0.0, 0.0], dt=0.02,
                                      v_max=1.2, omega_max=1.5)
    assert np.allclose(v, [0.1 + 0.01, -0.005, 0.002])
    assert np.allclose(a_star, p.accel)
