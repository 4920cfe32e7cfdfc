"""Benchmark protocols: success rates and error percentiles for IK tasks.

Targets are forward-kinematics poses of uniformly sampled in-limit
configurations, so every base benchmark target is reachable by construction.
The mobile-base protocol additionally translates each target uniformly inside
a 2 m ground-plane disk, which a planar base can always compensate; the
static-base baseline solves the same shifted targets with the base fixed at
identity. Wall-clock timings are reported separately and are informational
only (they depend on hardware, not on correctness).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import costs as ck
from .collision import Sphere, WorldModel
from .liegroups import Transform3
from .robot import RobotModel, link_transform, load_robot
from .tasks import (
    IkRequest,
    TrajRequest,
    plan_trajectory,
    solve_ik_beam,
    solve_ik_mobile,
    trajectory_signed_distances,
)

# distinct Philox key domains so target draws never collide with seed draws
_TARGET_KEY = 1 << 48
_SHIFT_KEY = 1 << 49


@dataclass
class BenchmarkSpec:
    urdf: str
    sidecar: str | None = None
    task: str = "ik"  # ik | ik_mobile | traj
    num_targets: int = 100
    rng_seed: int = 0
    batch_sizes: list[int] = field(default_factory=lambda: [1])
    target_link: str | None = None
    translation_radius: float = 2.0
    weights: ck.CostWeights = field(default_factory=ck.CostWeights)

    def __post_init__(self):
        if self.num_targets < 1:
            raise ValueError(f"num_targets must be >= 1, got {self.num_targets}")
        if self.task not in ("ik", "ik_mobile", "traj"):
            raise ValueError(f"unknown benchmark task '{self.task}'")
        if any(b < 1 for b in self.batch_sizes):
            raise ValueError("batch sizes must be >= 1")

    @staticmethod
    def from_json(data: dict, base_dir: str = ".") -> "BenchmarkSpec":
        def resolve(p):
            return p if p is None or os.path.isabs(p) else os.path.join(base_dir, p)

        weights = (
            ck.CostWeights.from_json(data["weights"])
            if "weights" in data
            else ck.CostWeights()
        )
        return BenchmarkSpec(
            urdf=resolve(data["urdf"]),
            sidecar=resolve(data.get("sidecar")),
            task=data.get("task", "ik"),
            num_targets=data.get("num_targets", 100),
            rng_seed=data.get("rng_seed", 0),
            batch_sizes=list(data.get("batch_sizes", [1])),
            target_link=data.get("target_link"),
            translation_radius=data.get("translation_radius", 2.0),
            weights=weights,
        )


def generate_reachable_targets(
    model: RobotModel, link: str, count: int, rng_seed: int
) -> list[Transform3]:
    """FK poses of uniformly sampled configurations (reachable by construction)."""
    targets = []
    for i in range(count):
        gen = np.random.Generator(
            np.random.Philox(key=np.array([rng_seed, _TARGET_KEY + i], dtype=np.uint64))
        )
        targets.append(link_transform(model, model.sample_configuration(gen), link))
    return targets


def disk_translations(count: int, radius: float, rng_seed: int) -> np.ndarray:
    """Uniform draws from a ground-plane disk of the given radius, shape (count, 3)."""
    out = np.zeros((count, 3))
    for i in range(count):
        gen = np.random.Generator(
            np.random.Philox(key=np.array([rng_seed, _SHIFT_KEY + i], dtype=np.uint64))
        )
        angle = gen.uniform(0.0, 2.0 * math.pi)
        r = radius * math.sqrt(gen.uniform())
        out[i] = [r * math.cos(angle), r * math.sin(angle), 0.0]
    return out


def _error_stats(pos, rot):
    pos, rot = np.asarray(pos), np.asarray(rot)
    return {
        "pos_mean": float(pos.mean()),
        "pos_std": float(pos.std()),
        "pos_p98": float(np.percentile(pos, 98)),
        "rot_mean": float(rot.mean()),
        "rot_std": float(rot.std()),
        "rot_p98": float(np.percentile(rot, 98)),
    }


def _map_targets(fn, targets, workers: int):
    """Order-preserving map over targets; worker count never changes results."""
    if workers <= 1 or len(targets) <= 1:
        return [fn(i) for i in range(len(targets))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(len(targets))))


def run_ik_benchmark(
    spec: BenchmarkSpec, model: RobotModel | None = None, workers: int = 1
) -> dict:
    model = model or load_robot(spec.urdf, spec.sidecar)
    link = spec.target_link or model.link_names[-1]
    targets = generate_reachable_targets(model, link, spec.num_targets, spec.rng_seed)

    def solve_one(i):
        return solve_ik_beam(
            IkRequest(
                model=model,
                target_link=link,
                target_pose=targets[i],
                weights=spec.weights,
                rng_seed=spec.rng_seed,
            )
        )

    per_batch = {}
    timings = {}
    for batch in spec.batch_sizes:
        start = time.perf_counter()
        results = _map_targets(solve_one, targets, workers)
        elapsed = time.perf_counter() - start
        pos = [r.pos_error for r in results]
        rot = [r.rot_error for r in results]
        per_batch[str(batch)] = {
            "success_rate": sum(r.success for r in results) / spec.num_targets,
            **_error_stats(pos, rot),
        }
        timings[str(batch)] = {
            "total_ms": elapsed * 1e3,
            "per_solve_ms": elapsed * 1e3 / spec.num_targets,
        }
    return {
        "task": "ik",
        "num_targets": spec.num_targets,
        "results": {"per_batch_size": per_batch},
        "timings_ms_informational": timings,
    }


def run_mobile_benchmark(
    spec: BenchmarkSpec, model: RobotModel | None = None, workers: int = 1
) -> dict:
    model = model or load_robot(spec.urdf, spec.sidecar)
    link = spec.target_link or model.link_names[-1]
    targets = generate_reachable_targets(model, link, spec.num_targets, spec.rng_seed)
    shifts = disk_translations(spec.num_targets, spec.translation_radius, spec.rng_seed)

    rows = {}
    timings = {}
    for label, solver, kwargs in (
        ("static", solve_ik_beam, {}),
        ("optimized", solve_ik_mobile, {"optimize_base": True}),
    ):

        def solve_one(i, solver=solver, kwargs=kwargs):
            shifted = Transform3(targets[i].rotation, targets[i].translation + shifts[i])
            return solver(
                IkRequest(
                    model=model,
                    target_link=link,
                    target_pose=shifted,
                    weights=spec.weights,
                    rng_seed=spec.rng_seed,
                    **kwargs,
                )
            )

        start = time.perf_counter()
        results = _map_targets(solve_one, targets, workers)
        timings[label] = {"total_ms": (time.perf_counter() - start) * 1e3}
        pos = [r.pos_error for r in results]
        rot = [r.rot_error for r in results]
        rows[label] = {
            "success_rate": sum(r.success for r in results) / spec.num_targets,
            **_error_stats(pos, rot),
        }
    return {
        "task": "ik_mobile",
        "num_targets": spec.num_targets,
        "results": rows,
        "timings_ms_informational": timings,
    }


def run_traj_benchmark(
    spec: BenchmarkSpec, model: RobotModel | None = None, workers: int = 1
) -> dict:
    model = model or load_robot(spec.urdf, spec.sidecar)
    link = spec.target_link or model.link_names[-1]
    feasible = 0
    endpoint_pos = []
    min_sds = []
    timings = {"scenes_ms": []}
    for i in range(spec.num_targets):
        pa, pb, world = _blocked_scene(model, link, spec.rng_seed, i)
        start = time.perf_counter()
        res = plan_trajectory(
            TrajRequest(
                model=model, start_pose=pa, goal_pose=pb, world=world,
                rng_seed=spec.rng_seed + i, target_link=link,
            )
        )
        timings["scenes_ms"].append((time.perf_counter() - start) * 1e3)
        feasible += res.collision_free
        min_sds.append(res.min_signed_distance)
        endpoint_pos.append(max(res.start_pos_error, res.goal_pos_error))
    return {
        "task": "traj",
        "num_targets": spec.num_targets,
        "results": {
            "collision_free_rate": feasible / spec.num_targets,
            "worst_endpoint_pos_error": float(np.max(endpoint_pos)),
            "min_signed_distance": float(np.min(min_sds)),
        },
        "timings_ms_informational": timings,
    }


def _blocked_scene(model, link, rng_seed, index):
    """Random scene whose straight-line joint path hits a sphere the endpoints miss."""
    gen = np.random.Generator(
        np.random.Philox(key=np.array([rng_seed, (1 << 50) + index], dtype=np.uint64))
    )
    while True:
        qa = model.sample_configuration(gen)
        qb = model.sample_configuration(gen)
        pa = link_transform(model, qa, link)
        pb = link_transform(model, qb, link)
        if np.linalg.norm(pa.translation - pb.translation) < 0.4:
            continue
        ika = solve_ik_beam(
            IkRequest(model=model, target_link=link, target_pose=pa, rng_seed=rng_seed)
        )
        ikb = solve_ik_beam(
            IkRequest(model=model, target_link=link, target_pose=pb, rng_seed=rng_seed)
        )
        if not (ika.success and ikb.success):
            continue
        mid = link_transform(model, 0.5 * (ika.q + ikb.q), link).translation
        world = WorldModel([Sphere(mid, 0.07)])
        interp = np.linspace(0.0, 1.0, 20)[:, None]
        line = ika.q[None, :] * (1 - interp) + ikb.q[None, :] * interp
        static, _ = trajectory_signed_distances(model, line, world)
        ends, _ = trajectory_signed_distances(model, np.stack([ika.q, ikb.q]), world)
        if static.min() < -0.01 and ends.min() > 0.06:
            return pa, pb, world


def run_benchmark(spec: BenchmarkSpec, workers: int = 1) -> dict:
    runner = {
        "ik": run_ik_benchmark,
        "ik_mobile": run_mobile_benchmark,
        "traj": run_traj_benchmark,
    }[spec.task]
    return runner(spec, workers=workers)


def format_table(result: dict) -> str:
    """Aligned text rendering of a benchmark result."""
    lines = [f"task: {result['task']}   targets: {result['num_targets']}"]
    if result["task"] == "ik_mobile":
        lines.append(
            f"{'base':<11}{'pos err (m, mean±std)':<26}{'rot err (rad, mean±std)':<27}{'succ (%)':>9}"
        )
        for label in ("static", "optimized"):
            row = result["results"][label]
            lines.append(
                f"{label:<11}"
                f"{row['pos_mean']:.3e} ± {row['pos_std']:.3e}   "
                f"{row['rot_mean']:.3e} ± {row['rot_std']:.3e}   "
                f"{100 * row['success_rate']:>8.1f}"
            )
    elif result["task"] == "ik":
        lines.append(
            f"{'batch':<8}{'succ (%)':>9}  {'pos p98 (m)':>12}  {'rot p98 (rad)':>14}  {'ms/solve (info)':>16}"
        )
        timings = result.get("timings_ms_informational", {})
        for batch, row in result["results"]["per_batch_size"].items():
            t = timings.get(batch, {}).get("per_solve_ms")
            t_text = f"{t:>16.2f}" if t is not None else f"{'-':>16}"
            lines.append(
                f"{batch:<8}{100 * row['success_rate']:>9.2f}  {row['pos_p98']:>12.3e}  "
                f"{row['rot_p98']:>14.3e}  {t_text}"
            )
    else:
        row = result["results"]
        lines.append(
            f"collision-free: {100 * row['collision_free_rate']:.1f}%   "
            f"min signed distance: {row['min_signed_distance']:.4f} m   "
            f"worst endpoint pos error: {row['worst_endpoint_pos_error']:.2e} m"
        )
    lines.append("timings are informational only (hardware-dependent)")
    return "\n".join(lines)
