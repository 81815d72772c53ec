"""Command line interface: run scenarios, evaluate logs, replay command
streams, and serve the WebSocket teleoperation service.

Exit codes for ``run``: 0 goal reached, 2 scenario schema error,
3 collision, 4 tick limit. API keys are taken from environment variables
named in the flags, never from files or arguments.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import metrics as met
from .geometry import Pose2D
from .runlog import (
    RunLog,
    RunLogHeader,
    RunLogWriter,
    read_runlog,
)
from .scenario import Scenario, ScenarioError, load_scenario
from .simulate import EXIT_SCHEMA, RunResult, replay_commands, run_scenario
from .vlm import HttpVlmBackend, HttpVlmConfig


def _save_marked_images(result: RunResult, out_dir: Path) -> None:
    from PIL import Image

    for request_id, img in result.marked_images.items():
        Image.fromarray(img).save(out_dir / f"marked_{request_id}.png")


def _write_log(result: RunResult, path: Path) -> None:
    with RunLogWriter(path, result.header) as writer:
        for record in result.records:
            writer.append(record)


def _run_metrics(result: RunResult, scenario: Scenario) -> dict:
    poses = [r.pose for r in result.records]
    points = [(p[0], p[1]) for p in poses]
    start = points[0] if points else (0.0, 0.0)
    goal = scenario.world.goal
    cmd_speeds = [abs(r.cmd_v) for r in result.records]
    norm_len = None
    if len(points) >= 2 and math.dist(start, goal) > 0:
        norm_len = met.norm_traj_length(points, start, goal)
    pct = met.pct_unacceptable(result.reference_paths, scenario.world, scenario.policy)
    return {
        "scenario": scenario.name,
        "reached_goal": result.reached_goal,
        "collided": result.collided,
        "ticks": len(result.records),
        "query_count": result.query_count,
        "norm_traj_length": norm_len,
        "mean_velocity": sum(cmd_speeds) / len(cmd_speeds) if cmd_speeds else 0.0,
        "pct_unacceptable": pct,
    }


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)

    classifier = None
    vlm_backend = None
    if args.backend == "http":
        if not args.vlm_url:
            print("--vlm-url is required with --backend http", file=sys.stderr)
            return EXIT_SCHEMA
        vlm_backend = HttpVlmBackend(
            HttpVlmConfig(
                url=args.vlm_url,
                model=args.vlm_model,
                auth_env_var=args.vlm_auth_env,
                timeout=args.vlm_timeout,
            )
        )
        if args.classifier_url:
            from .context import HttpContextClassifier

            classifier = HttpContextClassifier(
                args.classifier_url, auth_env_var=args.classifier_auth_env
            )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_scenario(
        scenario,
        method=args.method,
        classifier=classifier,
        vlm_backend=vlm_backend,
        extrapolation=False if args.disable_extrapolation else None,
        marker_filter=False if args.disable_marker_filter else None,
        context_prompting=False if args.disable_context_prompting else None,
        source=args.source_tag,
    )
    _write_log(result, out_dir / "runlog.jsonl")
    _save_marked_images(result, out_dir)
    summary = _run_metrics(result, scenario)
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return result.exit_code


def _trajectory_from_log(log: RunLog) -> met.RecordedTrajectory:
    tick_rate = float(log.header.get("tick_rate", 10.0))
    return met.RecordedTrajectory(
        times=tuple(r["tick"] / tick_rate for r in log.records),
        points=tuple((r["pose"][0], r["pose"][1]) for r in log.records),
        velocities=tuple(r["cmd_v"] for r in log.records),
        source=log.header.get("source", "scripted"),
    )


def cmd_eval(args) -> int:
    logs: dict[str, RunLog] = {}
    for label, path in (("vlm", args.vlm), ("baseline", args.baseline), ("teleop", args.teleop)):
        if path:
            logs[label] = read_runlog(path)
    if not logs:
        print("eval needs at least one log", file=sys.stderr)
        return 2
    scenarios = {log.header.get("scenario") for log in logs.values()}
    if len(scenarios) > 1:
        print(f"scenario mismatch across logs: {sorted(scenarios)}", file=sys.stderr)
        return 2

    teleop = logs.get("teleop")
    if teleop is None:
        print("warning: no teleop log; Fréchet column omitted", file=sys.stderr)

    rows = []
    for label, log in logs.items():
        traj = _trajectory_from_log(log)
        header = log.header
        start = tuple(header["start_pose"][:2])
        goal = tuple(header["goal"])
        frechet = None
        if teleop is not None:
            frechet = met.discrete_frechet(
                traj.points, _trajectory_from_log(teleop).points
            )
        report = met.MetricsReport(
            frechet=frechet,
            norm_traj_length=(
                met.norm_traj_length(traj.points, start, goal)
                if len(traj.points) >= 2
                else float("nan")
            ),
            mean_velocity=met.mean_velocity(traj),
            ref_path_error=None,
            cosine_similarity=None,
            pct_unacceptable=None,
            query_count=len(log.query_events("started")),
        )
        rows.append({"method": label, **report.__dict__})

    def fmt(value):
        return "-" if value is None else f"{value:.3f}"

    lines = [
        f"scenario: {next(iter(scenarios))}",
        f"{'method':<10s} {'frechet':>9s} {'norm_len':>9s} {'mean_vel':>9s} {'queries':>8s}",
    ]
    for row in rows:
        lines.append(
            f"{row['method']:<10s} {fmt(row['frechet']):>9s} "
            f"{fmt(row['norm_traj_length']):>9s} {fmt(row['mean_velocity']):>9s} "
            f"{row['query_count']:>8d}"
        )
    table = "\n".join(lines)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
    return 0


def cmd_replay(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    log = read_runlog(args.log)
    start_pose = log.header["start_pose"]
    extra = log.header.get("extra", {})
    start = replace(
        scenario.robot,
        pose=Pose2D(start_pose[0], start_pose[1], start_pose[2], frame="odom"),
        v=float(extra.get("start_v", 0.0)),
        omega=float(extra.get("start_omega", 0.0)),
    )
    scenario = replace(scenario, robot=start)
    replayed = replay_commands(scenario, log.commands)
    mismatches = [
        (i, logged, sim)
        for i, (logged, sim) in enumerate(zip(log.poses, replayed))
        if tuple(logged) != tuple(sim)
    ]
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        header = RunLogHeader(
            scenario=log.header["scenario"],
            source="replay",
            seed=int(log.header.get("seed", 0)),
            tick_rate=float(log.header.get("tick_rate", 10.0)),
            goal=tuple(log.header["goal"]),
            start_pose=tuple(start_pose),
        )
        with open(out_dir / "replay.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "header": header.__dict__,
                    "poses": replayed,
                    "exact": not mismatches,
                },
                fh,
                indent=2,
                sort_keys=True,
                default=list,
            )
    if mismatches:
        i, logged, sim = mismatches[0]
        print(
            f"replay diverged at tick {i}: logged {logged} vs simulated {sim}",
            file=sys.stderr,
        )
        return 1
    print(f"replay exact over {len(replayed)} ticks")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    app = build_app(scenario, mode=args.mode, out_dir=args.out)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlmnav", description="VLM-guided navigation simulator and tools"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario closed-loop and write logs")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--backend", choices=["oracle", "http"], default="oracle")
    p.add_argument("--method", choices=["vlm", "baseline"], default="vlm")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--source-tag", default=None, help="log source tag override")
    p.add_argument("--disable-extrapolation", action="store_true")
    p.add_argument(
        "--disable-marker-filter",
        action="store_true",
        help="ablation: keep markers on obstructed candidates too",
    )
    p.add_argument(
        "--disable-context-prompting",
        action="store_true",
        help="ablation: one combined prompt instead of per-context behavior",
    )
    p.add_argument("--vlm-url", default=None)
    p.add_argument("--vlm-model", default="")
    p.add_argument("--vlm-auth-env", default=None, help="env var holding the API key")
    p.add_argument("--vlm-timeout", type=float, default=15.0)
    p.add_argument("--classifier-url", default=None)
    p.add_argument("--classifier-auth-env", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="compute metrics tables from run logs")
    p.add_argument("--vlm", default=None)
    p.add_argument("--baseline", default=None)
    p.add_argument("--teleop", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-simulate a logged command stream")
    p.add_argument("--scenario", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the WebSocket simulation service")
    p.add_argument("--scenario", required=True)
    p.add_argument("--port", type=int, default=8731)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--mode", choices=["teleop", "autonomous"], default="teleop")
    p.add_argument("--out", default="runs/serve")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
