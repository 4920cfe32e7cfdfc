"""Command-line entry point.

Subcommands: solve-ik, plan-traj, benchmark, serve. All outputs are JSON on
stdout (human-readable tables go to stdout for `benchmark --format text`);
errors go to stderr. Exit codes: 0 solved successfully, 2 solved but not
successful (e.g. unreachable IK target), 1 error. Every command is
deterministic under a fixed --rng-seed; wall-clock timings are emitted only
with --timings and are informational.

KINOPTIK_WORKERS overrides the default worker count for benchmark runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import costs as ck
from .benchmark import BenchmarkSpec, format_table, run_benchmark
from .collision import WorldModel
from .errors import KinoptikError
from .liegroups import Transform3
from .robot import load_robot
from .tasks import IkRequest, TrajRequest, load_request, plan_trajectory, solve_ik_beam, solve_ik_mobile


def _load_json_arg(value: str) -> dict:
    """Parse an inline JSON value or @path reference."""
    if value.startswith("@"):
        with open(value[1:]) as f:
            return json.load(f)
    return json.loads(value)


def _weights_from_flag(path: str | None) -> ck.CostWeights:
    if path is None:
        return ck.CostWeights()
    with open(path) as f:
        return ck.CostWeights.from_json(json.load(f))


def _default_workers() -> int:
    return int(os.environ.get("KINOPTIK_WORKERS", "1"))


def cmd_solve_ik(args) -> int:
    if args.problem:
        req = load_request(args.problem)
        if isinstance(req, TrajRequest):
            raise ValueError("problem file describes a trajectory task; use plan-traj")
        if args.rng_seed is not None:
            req.rng_seed = args.rng_seed
    else:
        if not (args.urdf and args.link and args.target):
            raise ValueError("solve-ik needs --urdf, --link, and --target (or --problem)")
        model = load_robot(args.urdf, args.sidecar)
        req = IkRequest(
            model=model,
            target_link=args.link,
            target_pose=Transform3.from_json(_load_json_arg(args.target)),
            weights=_weights_from_flag(args.weights),
            seeds=args.seeds,
            total_steps=args.total_steps,
            prune_after=args.prune_after,
            keep=args.keep,
            rng_seed=args.rng_seed or 0,
            optimize_base=args.mobile,
        )
    solver = solve_ik_mobile if (args.mobile or req.optimize_base) else solve_ik_beam
    result = solver(req)
    print(json.dumps(result.to_json(include_timing=args.timings), indent=2))
    return 0 if result.success else 2


def cmd_plan_traj(args) -> int:
    if args.problem:
        req = load_request(args.problem)
        if isinstance(req, IkRequest):
            raise ValueError("problem file describes an IK task; use solve-ik")
        if args.rng_seed is not None:
            req.rng_seed = args.rng_seed
    else:
        if not (args.urdf and args.start and args.goal):
            raise ValueError("plan-traj needs --urdf, --start, and --goal (or --problem)")
        model = load_robot(args.urdf, args.sidecar)
        world = WorldModel()
        if args.world:
            with open(args.world) as f:
                world = WorldModel.from_json(json.load(f))
        weights = (
            ck.CostWeights.from_json(json.load(open(args.weights)))
            if args.weights
            else TrajRequest.__dataclass_fields__["weights"].default_factory()
        )
        req = TrajRequest(
            model=model,
            start_pose=Transform3.from_json(_load_json_arg(args.start)),
            goal_pose=Transform3.from_json(_load_json_arg(args.goal)),
            timesteps=args.timesteps,
            dt=args.dt,
            world=world,
            weights=weights,
            target_link=args.link,
            rng_seed=args.rng_seed or 0,
        )
    result = plan_trajectory(req)
    print(json.dumps(result.to_json(include_timing=args.timings), indent=2))
    return 0 if result.success else 2


def cmd_benchmark(args) -> int:
    with open(args.spec) as f:
        data = json.load(f)
    spec = BenchmarkSpec.from_json(data, base_dir=os.path.dirname(os.path.abspath(args.spec)))
    result = run_benchmark(spec, workers=args.workers)
    if not args.timings:
        result = {k: v for k, v in result.items() if k != "timings_ms_informational"}
    if args.format in ("json", "both"):
        print(json.dumps(result, indent=2))
    if args.format in ("text", "both"):
        print(format_table(result))
    return 0


def cmd_serve(args) -> int:
    from .server import serve  # deferred: pulls in fastapi/uvicorn

    serve(
        urdf=args.urdf,
        sidecar=args.sidecar,
        link=args.link,
        host=args.host,
        port=args.port,
        task=args.task,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinoptik", description="Kinematic optimization toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ik = sub.add_parser("solve-ik", help="solve inverse kinematics for a target pose")
    ik.add_argument("--urdf")
    ik.add_argument("--sidecar")
    ik.add_argument("--link")
    ik.add_argument("--target", help='pose JSON {"wxyz": [...], "pos": [...]} or @file')
    ik.add_argument("--problem", help="problem JSON file instead of flags")
    ik.add_argument("--weights", help="cost weights JSON file")
    ik.add_argument("--rng-seed", type=int, default=None)
    ik.add_argument("--seeds", type=int, default=64)
    ik.add_argument("--total-steps", type=int, default=16)
    ik.add_argument("--prune-after", type=int, default=6)
    ik.add_argument("--keep", type=int, default=4)
    ik.add_argument("--mobile", action="store_true", help="optimize an SE(2) base pose")
    ik.add_argument("--timings", action="store_true", help="include wall-clock timing")
    ik.set_defaults(func=cmd_solve_ik)

    traj = sub.add_parser("plan-traj", help="collision-aware trajectory optimization")
    traj.add_argument("--urdf")
    traj.add_argument("--sidecar")
    traj.add_argument("--link")
    traj.add_argument("--start", help="start pose JSON or @file")
    traj.add_argument("--goal", help="goal pose JSON or @file")
    traj.add_argument("--world", help="obstacles JSON file")
    traj.add_argument("--problem")
    traj.add_argument("--weights")
    traj.add_argument("--timesteps", type=int, default=20)
    traj.add_argument("--dt", type=float, default=0.1)
    traj.add_argument("--rng-seed", type=int, default=None)
    traj.add_argument("--timings", action="store_true")
    traj.set_defaults(func=cmd_plan_traj)

    bench = sub.add_parser("benchmark", help="run a benchmark spec")
    bench.add_argument("--spec", required=True)
    bench.add_argument("--format", choices=("json", "text", "both"), default="both")
    bench.add_argument("--timings", action="store_true")
    bench.add_argument(
        "--workers", type=int, default=_default_workers(),
        help="parallel target solves (default: KINOPTIK_WORKERS or 1)",
    )
    bench.set_defaults(func=cmd_benchmark)

    serve = sub.add_parser("serve", help="serve the interactive web viewer")
    serve.add_argument("--urdf", required=True)
    serve.add_argument("--sidecar")
    serve.add_argument("--link")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--task", default="ik", choices=("ik",))
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (KinoptikError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
