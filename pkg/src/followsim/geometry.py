"""Planar pose math and ray/shape intersection primitives shared by the
simulator, the sensors, and the navigation stack.

Conventions: world frame is right-handed with z up, yaw measured
counter-clockwise from +x. Angles are radians unless a name says otherwise.
"""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a):
    """Wrap an angle (scalar or array) to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def angle_diff(a, b):
    """Smallest signed difference a - b, wrapped to [-pi, pi)."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def rot2(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def body_to_world(vx: float, vy: float, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return c * vx - s * vy, s * vx + c * vy


def world_to_body(wx: float, wy: float, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return c * wx + s * wy, -s * wx + c * wy


def circular_median(angles) -> float:
    """Median of up to a few angles, computed on the unwrapped circle.

    Entries are unwrapped around the last element before taking the
    ordinary median, so clusters straddling +-pi behave like clusters
    anywhere else.
    """
    angles = np.asarray(angles, dtype=float)
    ref = angles[-1]
    unwrapped = ref + wrap_angle(angles - ref)
    return float(wrap_angle(np.median(unwrapped)))


# ---------------------------------------------------------------------------
# Shapes. Boxes are axis-aligned [min, max] corner pairs; cylinders are
# vertical with a 2D center; walls are thin vertical rectangles given by two
# ground-plane endpoints and a height.
# ---------------------------------------------------------------------------


def aabb_distance(point: np.ndarray, box_min: np.ndarray, box_max: np.ndarray) -> float:
    """Euclidean distance from a point to a box surface (0 inside)."""
    d = np.maximum(np.maximum(box_min - point, point - box_max), 0.0)
    return float(np.linalg.norm(d))


def aabb_closest_point(point: np.ndarray, box_min: np.ndarray, box_max: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(point, box_min), box_max)


def circle_box_penetration_2d(center, radius, bmin, bmax):
    """Penetration resolution of a disc against a 2D box.

    Returns a displacement vector to push the disc out of the box, or None
    if the disc does not overlap the box.
    """
    cx, cy = center
    qx = min(max(cx, bmin[0]), bmax[0])
    qy = min(max(cy, bmin[1]), bmax[1])
    dx, dy = cx - qx, cy - qy
    d2 = dx * dx + dy * dy
    if d2 >= radius * radius:
        return None
    if d2 > 1e-12:
        d = math.sqrt(d2)
        push = radius - d
        return np.array([dx / d * push, dy / d * push])
    # center inside the box: exit through the nearest face
    exits = [
        (cx - bmin[0] + radius, np.array([-1.0, 0.0])),
        (bmax[0] - cx + radius, np.array([1.0, 0.0])),
        (cy - bmin[1] + radius, np.array([0.0, -1.0])),
        (bmax[1] - cy + radius, np.array([0.0, 1.0])),
    ]
    dist, normal = min(exits, key=lambda e: e[0])
    return normal * dist


def circle_circle_penetration_2d(center, radius, other_center, other_radius):
    d = np.asarray(center, dtype=float) - np.asarray(other_center, dtype=float)
    dist = float(np.linalg.norm(d))
    overlap = radius + other_radius - dist
    if overlap <= 0.0:
        return None
    if dist < 1e-9:
        return np.array([overlap, 0.0])
    return d / dist * overlap


def circle_segment_penetration_2d(center, radius, seg_a, seg_b):
    """Push a disc out of a line segment (used for thin walls)."""
    a = np.asarray(seg_a, dtype=float)
    b = np.asarray(seg_b, dtype=float)
    p = np.asarray(center, dtype=float)
    ab = b - a
    t = float(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-12))
    t = min(max(t, 0.0), 1.0)
    q = a + t * ab
    d = p - q
    dist = float(np.linalg.norm(d))
    if dist >= radius:
        return None
    if dist < 1e-9:
        n = np.array([-ab[1], ab[0]])
        n /= max(np.linalg.norm(n), 1e-12)
        return n * radius
    return d / dist * (radius - dist)


# ---------------------------------------------------------------------------
# Vectorized ray casting. All take origins (3,), unit directions (n, 3) and
# return hit distances (n,) with inf where the primitive is missed.
# ---------------------------------------------------------------------------

_INF = np.inf


def ray_ground(origin, dirs, z: float = 0.0):
    dz = dirs[:, 2]
    t = np.full(len(dirs), _INF)
    moving = np.abs(dz) > 1e-12
    tt = (z - origin[2]) / np.where(moving, dz, 1.0)
    valid = moving & (tt > 0.0)
    t[valid] = tt[valid]
    return t


def ray_aabb(origin, dirs, bmin, bmax):
    inv = 1.0 / np.where(np.abs(dirs) > 1e-12, dirs, 1e-12)
    t0 = (bmin[None, :] - origin[None, :]) * inv
    t1 = (bmax[None, :] - origin[None, :]) * inv
    tnear = np.max(np.minimum(t0, t1), axis=1)
    tfar = np.min(np.maximum(t0, t1), axis=1)
    hit = (tnear <= tfar) & (tfar > 0.0)
    t = np.where(hit, np.where(tnear > 0.0, tnear, tfar), _INF)
    return t


def ray_vertical_cylinder(origin, dirs, cx, cy, radius, z0, z1):
    ox, oy = origin[0] - cx, origin[1] - cy
    dx, dy = dirs[:, 0], dirs[:, 1]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    t = np.full(len(dirs), _INF)
    ok = (disc >= 0.0) & (a > 1e-12)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        tt = (-b + sign * sq) / np.where(ok, 2.0 * a, 1.0)
        z = origin[2] + tt * dirs[:, 2]
        good = ok & (tt > 0.0) & (z >= z0) & (z <= z1) & (tt < t)
        t[good] = tt[good]
    return t


def ray_wall(origin, dirs, a, b, height):
    """Thin vertical rectangle from ground endpoint a to b, z in [0, height]."""
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    # plane normal (ey, -ex, 0)
    nx, ny = ey, -ex
    nl = math.hypot(nx, ny)
    nx, ny = nx / nl, ny / nl
    denom = dirs[:, 0] * nx + dirs[:, 1] * ny
    num = (ax - origin[0]) * nx + (ay - origin[1]) * ny
    moving = np.abs(denom) > 1e-12
    tt = num / np.where(moving, denom, 1.0)
    px = origin[0] + tt * dirs[:, 0]
    py = origin[1] + tt * dirs[:, 1]
    pz = origin[2] + tt * dirs[:, 2]
    s = ((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey)
    hit = moving & (tt > 0.0) & (s >= 0.0) & (s <= 1.0) & (pz >= 0.0) & (pz <= height)
    return np.where(hit, tt, _INF)


def ray_capsule(origin, dirs, cx, cy, radius, z0, z1):
    """Vertical capsule: cylinder body plus hemispherical caps at z0 and z1."""
    t = ray_vertical_cylinder(origin, dirs, cx, cy, radius, z0, z1)
    for zc in (z0, z1):
        center = np.array([cx, cy, zc])
        oc = origin - center
        b = 2.0 * dirs @ oc
        c = oc @ oc - radius * radius
        disc = b * b - 4.0 * c
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for sign in (-1.0, 1.0):
            tt = (-b + sign * sq) / 2.0
            good = ok & (tt > 0.0) & (tt < t)
            t[good] = tt[good]
    return t


def segment_blocked(p0: np.ndarray, p1: np.ndarray, boxes, cylinders, walls,
                    capsules=()) -> bool:
    """True when the open segment p0 -> p1 intersects any listed shape.

    Shapes follow the WorldModel container layout: boxes are (min, max)
    3-vectors, cylinders (cx, cy, r, z0, z1), walls (a, b, height) and
    capsules (cx, cy, r, z0, z1).
    """
    d = p1 - p0
    length = float(np.linalg.norm(d))
    if length < 1e-9:
        return False
    dirs = (d / length)[None, :]
    for bmin, bmax in boxes:
        t = ray_aabb(p0, dirs, bmin, bmax)[0]
        if t < length - 1e-9:
            return True
    for cx, cy, r, z0, z1 in cylinders:
        t = ray_vertical_cylinder(p0, dirs, cx, cy, r, z0, z1)[0]
        if t < length - 1e-9:
            return True
    for a, b, h in walls:
        t = ray_wall(p0, dirs, a, b, h)[0]
        if t < length - 1e-9:
            return True
    for cx, cy, r, z0, z1 in capsules:
        t = ray_capsule(p0, dirs, cx, cy, r, z0, z1)[0]
        if t < length - 1e-9:
            return True
    return False
