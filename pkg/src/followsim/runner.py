"""Scenario execution: drives every stage at its rate on a simulated clock,
collects logs and metrics, and hosts the optional live-steering endpoint.

The schedule runs on a 600 Hz base grid (the least common multiple of all
stage rates), with a fixed stage order at coincident ticks: physics, then
sensors, then fusion/tracking, then navigation. Identical (scenario, seed,
command log) inputs produce byte-identical logs.
"""

from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .metrics import RunMetrics, compute_metrics
from .pipeline import FollowPipeline
from .scenario import Scenario, ScenarioError, load_scenario
from .tracker import TrackerStatus

BASE_HZ = 600
PHYSICS_EVERY = 3      # 200 Hz
NAV_EVERY = 12         # 50 Hz
CAMERA_EVERY = 40      # 15 Hz
LIDAR_EVERY = 60       # 10 Hz
TRACKER_EVERY = 60     # 10 Hz
AOA_EVERY = 120        # 5 Hz
STATE_EVERY = 60       # 10 Hz state stream


@dataclass
class RunResult:
    metrics: RunMetrics
    exit_code: int
    final_status: str
    stage_counts: dict
    nav_cycle_ms: list
    logs: dict


def run_simulation(scenario: Scenario, seed: int | None = None,
                   logs_dir=None, metrics_path=None, bench_nav: bool = False,
                   state_callback=None, command_source=None,
                   realtime: bool = False) -> RunResult:
    """Execute a scenario to completion.

    command_source, when given, is polled once per physics tick and must
    return an iterable of ("steer", vx, vy) / ("mode", value) tuples.
    state_callback receives the UI state dict at 10 Hz.
    """
    pipeline = FollowPipeline(scenario, seed=seed)
    total = int(round(scenario.duration * BASE_HZ))
    dt_phys = PHYSICS_EVERY / BASE_HZ
    dt_nav = NAV_EVERY / BASE_HZ
    counts = {"physics": 0, "lidar": 0, "camera": 0, "aoa": 0, "tracker": 0, "nav": 0}
    nav_times: list[float] = []
    wall_start = time.perf_counter()

    for k in range(1, total + 1):
        t = k / BASE_HZ
        if realtime:
            lead = t - (time.perf_counter() - wall_start)
            if lead > 0:
                time.sleep(lead)
        if k % PHYSICS_EVERY == 0:
            if command_source is not None:
                _drain_commands(pipeline, command_source)
            pipeline.physics_tick(dt_phys, round(t, 9))
            counts["physics"] += 1
        if k % LIDAR_EVERY == 0:
            pipeline.lidar_tick(round(t, 9))
            counts["lidar"] += 1
        if k % CAMERA_EVERY == 0:
            pipeline.camera_tick(round(t, 9))
            counts["camera"] += 1
        if k % AOA_EVERY == 0:
            pipeline.aoa_tick(round(t, 9))
            counts["aoa"] += 1
        if k % TRACKER_EVERY == 0:
            pipeline.tracker_tick(round(t, 9))
            counts["tracker"] += 1
        if k % NAV_EVERY == 0:
            if bench_nav:
                t0 = time.perf_counter()
                pipeline.nav_tick(round(t, 9), dt_nav)
                nav_times.append((time.perf_counter() - t0) * 1e3)
            else:
                pipeline.nav_tick(round(t, 9), dt_nav)
            counts["nav"] += 1
        if state_callback is not None and k % STATE_EVERY == 0:
            state_callback(pipeline.state_message(round(t, 9)))

    logs = {
        "ground_truth": pipeline.logs.text("ground_truth"),
        "tracker": pipeline.logs.text("tracker"),
        "nav": pipeline.logs.text("nav") if "nav" in pipeline.logs.streams else "",
        "aoa": pipeline.logs.text("aoa"),
    }
    metrics = compute_metrics(logs["ground_truth"], logs["tracker"],
                              logs["nav"], logs["aoa"])
    final_status = pipeline.tracker.status.value
    ok = metrics.collision_count == 0 and final_status == TrackerStatus.TRACKING.value

    if logs_dir is not None:
        logs_dir = Path(logs_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)
        (logs_dir / "ground_truth.csv").write_text(logs["ground_truth"])
        (logs_dir / "tracker.csv").write_text(logs["tracker"])
        (logs_dir / "nav.jsonl").write_text(logs["nav"])
        (logs_dir / "aoa.csv").write_text(logs["aoa"])
    if metrics_path is not None:
        Path(metrics_path).parent.mkdir(parents=True, exist_ok=True)
        Path(metrics_path).write_text(metrics.to_csv())

    return RunResult(metrics=metrics, exit_code=0 if ok else 1,
                     final_status=final_status, stage_counts=counts,
                     nav_cycle_ms=nav_times, logs=logs)


def _drain_commands(pipeline: FollowPipeline, source):
    for cmd in source():
        kind = cmd[0]
        if kind == "steer":
            _, vx, vy = cmd
            speed = math.hypot(vx, vy)
            limit = pipeline.cfg.agent.max_speed
            if speed > limit:
                vx *= limit / speed
                vy *= limit / speed
            if pipeline.sim.leader is not None:
                pipeline.sim.apply_leader_command(vx, vy)
        elif kind == "mode":
            if cmd[1] == "scripted":
                pipeline.sim.release_leader_command()
            elif cmd[1] == "interactive" and pipeline.sim.leader is not None:
                pipeline.sim.apply_leader_command(0.0, 0.0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="followsim",
                                     description="Leader-following pipeline simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a scenario file")
    run_p.add_argument("scenario", help="path to a scenario JSON file")
    run_p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    run_p.add_argument("--metrics", default=None, help="write metrics CSV here")
    run_p.add_argument("--logs", default=None, help="write per-stage logs into this directory")
    run_p.add_argument("--serve", type=int, default=None, metavar="PORT",
                       help="serve the WebSocket steering endpoint")
    run_p.add_argument("--realtime", action="store_true",
                       help="pace the simulation to wall-clock time")
    run_p.add_argument("--bench-nav", action="store_true",
                       help="measure navigation cycle latency")
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(json.dumps({"status": "error", "reason": str(exc)}), file=sys.stderr)
        return 2

    server = None
    state_callback = None
    command_source = None
    if args.serve is not None:
        from .server import SteeringServer
        server = SteeringServer(port=args.serve)
        server.start()
        state_callback = server.push_state
        command_source = server.drain_commands

    try:
        result = run_simulation(
            scenario, seed=args.seed, logs_dir=args.logs,
            metrics_path=args.metrics, bench_nav=args.bench_nav,
            state_callback=state_callback, command_source=command_source,
            realtime=args.realtime)
    finally:
        if server is not None:
            server.stop()

    summary = {
        "status": "ok" if result.exit_code == 0 else "fail",
        "final_tracker_status": result.final_status,
        "metrics": {
            "follow_error_rms": result.metrics.follow_error_rms,
            "min_clearance": result.metrics.min_clearance,
            "id_switches": result.metrics.id_switches,
            "recovery_time_mean": result.metrics.recovery_time_mean,
            "collision_count": result.metrics.collision_count,
            "aoa_mean_abs_error": result.metrics.aoa_mean_abs_error,
            "aoa_std_error": result.metrics.aoa_std_error,
        },
    }
    if result.exit_code != 0:
        reasons = []
        if result.metrics.collision_count > 0:
            reasons.append(f"{result.metrics.collision_count} collisions")
        if result.final_status != "TRACKING":
            reasons.append(f"final tracker status {result.final_status}")
        summary["reason"] = "; ".join(reasons)
    if args.bench_nav and result.nav_cycle_ms:
        summary["nav_cycle_ms"] = {
            "median": round(statistics.median(result.nav_cycle_ms), 3),
            "p90": round(sorted(result.nav_cycle_ms)[int(0.9 * len(result.nav_cycle_ms))], 3),
            "max": round(max(result.nav_cycle_ms), 3),
        }
    print(json.dumps(summary))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
