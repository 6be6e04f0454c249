"""Hierarchical occupancy grid with multi-resolution queries.

Leaf cells hold clamped log-odds; coarser levels are boolean max-pools of
their children, so a node is occupied exactly when some descendant leaf is.
Queries summarize occupied space around a point as mixed-resolution cubes:
fine cells close in, coarser cells further out, without touching leaves
outside the innermost band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ObstacleCube:
    center: tuple           # (x, y, z) meters
    side: float


class HierarchicalOccupancy:
    def __init__(self, world_min, world_max, leaf_size: float = 0.1,
                 levels: int = 4, log_odds_hit: float = 0.85,
                 log_odds_miss: float = -0.4, log_odds_clamp: float = 4.0):
        self.origin = np.asarray(world_min, dtype=float)
        self.leaf_size = float(leaf_size)
        self.levels = int(levels)
        self.hit = log_odds_hit
        self.miss = log_odds_miss
        self.clamp = log_odds_clamp
        extent = np.asarray(world_max, dtype=float) - self.origin
        block = 2 ** (levels - 1)
        dims = np.ceil(extent / leaf_size).astype(int)
        dims = ((dims + block - 1) // block) * block
        self.dims = dims
        self.log_odds = np.zeros(dims, dtype=np.float32)
        # occupancy pyramid, level 0 = leaves
        self._occ = [np.zeros(dims, dtype=bool)]
        for lv in range(1, levels):
            self._occ.append(np.zeros(dims // (2 ** lv), dtype=bool))
        self._dirty = False
        self._dirty_lo = None
        self._dirty_hi = None

    # -- indexing -------------------------------------------------------------

    def _to_index(self, pts: np.ndarray) -> np.ndarray:
        return np.floor((pts - self.origin) / self.leaf_size).astype(np.int64)

    def _in_bounds(self, idx: np.ndarray) -> np.ndarray:
        return np.all((idx >= 0) & (idx < self.dims), axis=1)

    def leaf_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx) + 0.5) * self.leaf_size

    def _mark_dirty(self, lo, hi):
        lo = np.maximum(np.asarray(lo, dtype=np.int64), 0)
        hi = np.minimum(np.asarray(hi, dtype=np.int64), self.dims)
        if np.any(hi <= lo):
            return
        if self._dirty_lo is None:
            self._dirty_lo, self._dirty_hi = lo, hi
        else:
            self._dirty_lo = np.minimum(self._dirty_lo, lo)
            self._dirty_hi = np.maximum(self._dirty_hi, hi)

    # -- insertion -------------------------------------------------------------

    def insert_scan(self, points: np.ndarray, sensor_origin: np.ndarray,
                    human_boxes=(), max_range: float | None = None,
                    carve_stride: int = 1, min_z: float | None = None):
        """Fuse one scan: raise hit leaves, carve free space along rays.

        Points inside any human box (a (min, max) corner pair) are dropped
        before insertion so people never enter the static map; points below
        min_z (traversable floor) carve free space but are not inserted as
        hits. carve_stride subsamples the rays used for free-space carving.
        """
        pts = np.asarray(points, dtype=float)
        # space claimed by people is dynamic, not static: wipe any ghost
        # hits there (e.g. from scans taken before the person was detected)
        for bmin, bmax in human_boxes:
            self.clear_region(bmin, bmax)
        if len(pts) == 0:
            return
        keep = np.ones(len(pts), dtype=bool)
        for bmin, bmax in human_boxes:
            inside = np.all((pts >= np.asarray(bmin)) & (pts <= np.asarray(bmax)), axis=1)
            keep &= ~inside
        pts = pts[keep]
        origin = np.asarray(sensor_origin, dtype=float)
        if max_range is not None and len(pts):
            rr = np.linalg.norm(pts - origin, axis=1)
            pts = pts[rr <= max_range]
        if len(pts) == 0:
            return

        self._carve(origin, pts[::max(1, int(carve_stride))])
        if min_z is not None:
            pts = pts[pts[:, 2] >= min_z]
        if len(pts) == 0:
            return

        idx = self._to_index(pts)
        ok = self._in_bounds(idx)
        idx = idx[ok]
        if len(idx):
            flat = np.ravel_multi_index(idx.T, self.dims)
            lo_vals = self.log_odds.ravel()
            np.add.at(lo_vals, flat, self.hit)
            lo_vals[flat] = np.clip(lo_vals[flat], -self.clamp, self.clamp)
            self._mark_dirty(idx.min(axis=0), idx.max(axis=0) + 1)

    def clear_region(self, bmin, bmax):
        lo = np.maximum(self._to_index(np.asarray(bmin, dtype=float)[None, :])[0], 0)
        hi = np.minimum(self._to_index(np.asarray(bmax, dtype=float)[None, :])[0] + 1,
                        self.dims)
        if np.any(hi <= lo):
            return
        region = self.log_odds[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        np.minimum(region, 0.0, out=region)
        self._mark_dirty(lo, hi)

    def _carve(self, origin: np.ndarray, ends: np.ndarray):
        deltas = ends - origin
        dists = np.linalg.norm(deltas, axis=1)
        # sample strictly inside the ray so the hit leaf itself is untouched
        steps = np.maximum((dists / self.leaf_size).astype(np.int64) - 1, 0)
        total = int(steps.sum())
        if total == 0:
            return
        ray_ids = np.repeat(np.arange(len(ends)), steps)
        # within-ray sample number 1..steps[ray], built without a Python loop
        offsets = np.concatenate([[0], np.cumsum(steps)[:-1]])
        within = np.arange(total) - offsets[ray_ids] + 1
        frac = within * self.leaf_size / dists[ray_ids]
        samples = origin[None, :] + deltas[ray_ids] * frac[:, None]
        idx = self._to_index(samples)
        ok = self._in_bounds(idx)
        idx = idx[ok]
        if len(idx) == 0:
            return
        flat = np.unique(np.ravel_multi_index(idx.T, self.dims))
        self.log_odds.ravel()[flat] = np.maximum(
            self.log_odds.ravel()[flat] + self.miss, -self.clamp)
        self._mark_dirty(idx.min(axis=0), idx.max(axis=0) + 1)

    # -- hierarchy -------------------------------------------------------------

    def _refresh(self):
        if self._dirty:                      # full rebuild (direct pokes)
            self._occ[0] = self.log_odds > 0.0
            for lv in range(1, self.levels):
                prev = self._occ[lv - 1]
                d = prev.shape
                pooled = prev.reshape(d[0] // 2, 2, d[1] // 2, 2, d[2] // 2, 2)
                self._occ[lv] = pooled.any(axis=(1, 3, 5))
            self._dirty = False
            self._dirty_lo = None
            return
        if self._dirty_lo is None:
            return
        block = 2 ** (self.levels - 1)
        lo = (self._dirty_lo // block) * block
        hi = ((self._dirty_hi + block - 1) // block) * block
        hi = np.minimum(hi, self.dims)
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        self._occ[0][sl] = self.log_odds[sl] > 0.0
        for lv in range(1, self.levels):
            lo = lo // 2
            hi = hi // 2
            child = self._occ[lv - 1][lo[0] * 2:hi[0] * 2,
                                      lo[1] * 2:hi[1] * 2,
                                      lo[2] * 2:hi[2] * 2]
            d = child.shape
            pooled = child.reshape(d[0] // 2, 2, d[1] // 2, 2, d[2] // 2, 2)
            self._occ[lv][lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = \
                pooled.any(axis=(1, 3, 5))
        self._dirty_lo = None

    def occupied_leaves(self) -> np.ndarray:
        self._refresh()
        return np.argwhere(self._occ[0])

    def node_occupied(self, level: int, idx) -> bool:
        self._refresh()
        return bool(self._occ[level][tuple(idx)])

    # -- queries ---------------------------------------------------------------

    def query_cubes(self, position, bands=(1.0, 2.5, 5.0)) -> list:
        """Occupied space near a point as multi-resolution cubes.

        bands[k] is the outer radius served at cell size leaf*2^k; nodes are
        emitted at the coarsest band whose inner edge they clear, measured by
        the closest approach of the node's cube to the query point, so every
        occupied leaf within the outer radius is covered by some cube.
        """
        self._refresh()
        pos = np.asarray(position, dtype=float)
        radius = bands[-1]
        n_bands = len(bands)
        top = min(self.levels - 1, n_bands - 1)
        out: list[ObstacleCube] = []
        # seed with every occupied top-level node near the query
        size_top = self.leaf_size * (2 ** top)
        lo = np.floor((pos - radius - self.origin) / size_top).astype(int)
        hi = np.ceil((pos + radius - self.origin) / size_top).astype(int)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, np.array(self._occ[top].shape))
        if np.any(hi <= lo):
            return out
        window = self._occ[top][lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        stack = [(top, tuple(idx + lo)) for idx in np.argwhere(window)]
        while stack:
            level, idx = stack.pop()
            size = self.leaf_size * (2 ** level)
            cmin = self.origin + np.asarray(idx) * size
            gap = float(np.linalg.norm(np.maximum(
                np.maximum(cmin - pos, pos - (cmin + size)), 0.0)))
            if gap > radius:
                continue
            inner = bands[level - 1] if level > 0 else 0.0
            if gap >= inner or level == 0:
                out.append(ObstacleCube(center=tuple(cmin + size / 2.0), side=size))
                continue
            child_base = tuple(2 * i for i in idx)
            lower = self._occ[level - 1]
            for dx in range(2):
                for dy in range(2):
                    for dz in range(2):
                        ci = (child_base[0] + dx, child_base[1] + dy, child_base[2] + dz)
                        if lower[ci]:
                            stack.append((level - 1, ci))
        return out
