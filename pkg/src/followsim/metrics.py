"""Run metrics derived from the per-stage logs.

All statistics are recomputed from the serialized logs rather than live
state, so a stored run can be re-scored byte-for-byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .geometry import angle_diff


class MetricsError(ValueError):
    """Logs missing, empty, or not on a common clock."""


@dataclass
class RunMetrics:
    follow_error_rms: float
    min_clearance: float
    id_switches: int
    recovery_time_mean: float
    collision_count: int
    aoa_mean_abs_error: float     # degrees
    aoa_std_error: float          # degrees

    def to_csv(self) -> str:
        names = [f.name for f in fields(self)]
        values = []
        for name in names:
            v = getattr(self, name)
            values.append(str(v) if isinstance(v, int) else repr(round(float(v), 9)))
        return ",".join(names) + "\n" + ",".join(values) + "\n"


def _parse_csv(text: str, context: str):
    lines = [ln for ln in text.strip().splitlines() if ln]
    if len(lines) < 2:
        raise MetricsError(f"{context} log is empty")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def compute_metrics(ground_truth: str, tracker: str, nav: str, aoa: str) -> RunMetrics:
    """Score one run from its four log streams.

    ground_truth and tracker/aoa are CSV text; nav is JSON lines. The logs
    must share the simulation clock: every nav and aoa timestamp has to
    appear in the ground-truth log.
    """
    gt_header, gt_rows = _parse_csv(ground_truth, "ground truth")
    tr_header, tr_rows = _parse_csv(tracker, "tracker")

    t_key = {}
    clearances = np.empty(len(gt_rows))
    for i, row in enumerate(gt_rows):
        t_key[row[0]] = i
    gt_t = np.array([float(r[0]) for r in gt_rows])
    gt_xy = np.array([[float(r[1]), float(r[2])] for r in gt_rows])
    clearances = np.array([float(r[4]) for r in gt_rows])
    gt_bearing = np.array([float(r[5]) for r in gt_rows])

    def gt_index(t_str: str, context: str) -> int:
        if t_str not in t_key:
            raise MetricsError(f"{context} timestamp {t_str} not in ground truth clock")
        return t_key[t_str]

    # clearance / collisions
    min_clearance = float(np.min(clearances))
    in_contact = clearances <= 0.0
    collision_count = int(np.sum(in_contact[1:] & ~in_contact[:-1])
                          + (1 if in_contact[0] else 0))

    # tracker status timeline, divergences and recoveries
    tr_t = [float(r[0]) for r in tr_rows]
    tr_status = [r[6] for r in tr_rows]
    id_switches = sum(1 for s in tr_status if s == "DIVERGED")
    recoveries = []
    for i, s in enumerate(tr_status):
        if s != "DIVERGED":
            continue
        for j in range(i + 1, len(tr_status)):
            if tr_status[j] == "TRACKING":
                recoveries.append(tr_t[j] - tr_t[i])
                break
    recovery_time_mean = float(np.mean(recoveries)) if recoveries else 0.0

    # follow error while TRACKING, from the nav goal stream
    errors = []
    nav_lines = [ln for ln in nav.strip().splitlines() if ln]
    si = 0
    for ln in nav_lines:
        rec = json.loads(ln)
        t = rec["t"]
        while si + 1 < len(tr_t) and tr_t[si + 1] <= t + 1e-9:
            si += 1
        if not tr_t or tr_t[si] > t + 1e-9 or tr_status[si] != "TRACKING":
            continue
        idx = gt_index(repr(float(t)), "nav")
        goal = rec["goal"]
        errors.append((gt_xy[idx, 0] - goal[0]) ** 2 + (gt_xy[idx, 1] - goal[1]) ** 2)
    follow_error_rms = float(math.sqrt(np.mean(errors))) if errors else math.nan

    # AoA error statistics against the true beacon bearing, confident only
    _, aoa_rows = _parse_csv(aoa, "aoa") if aoa.strip().count("\n") >= 1 else (None, [])
    errs = []
    for row in aoa_rows:
        if row[3] == "1":
            continue
        idx = gt_index(row[0], "aoa")
        errs.append(math.degrees(float(angle_diff(float(row[1]), gt_bearing[idx]))))
    if errs:
        errs = np.array(errs)
        aoa_mean = float(np.mean(np.abs(errs)))
        aoa_std = float(np.std(errs))
    else:
        aoa_mean = math.nan
        aoa_std = math.nan

    if len(gt_t) and tr_t:
        if tr_t[0] < gt_t[0] - 1e-6 or tr_t[-1] > gt_t[-1] + 1e-6:
            raise MetricsError("tracker log extends beyond the ground-truth clock")

    return RunMetrics(
        follow_error_rms=follow_error_rms,
        min_clearance=min_clearance,
        id_switches=id_switches,
        recovery_time_mean=recovery_time_mean,
        collision_count=collision_count,
        aoa_mean_abs_error=aoa_mean,
        aoa_std_error=aoa_std,
    )
