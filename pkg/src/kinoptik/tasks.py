"""Task-level drivers: multi-seed IK, mobile-base IK, trajectory optimization.

IK uses a beam search over LM-optimized seeds: all seeds run a first stage of
LM steps in parallel, the best few survive a pruning cut (ranked by total
weighted cost, ties broken by seed index), and only those finish the
remaining steps. Seeds are drawn from counter-based generators keyed by
(rng_seed, seed index), so results are bitwise reproducible regardless of
batch or worker layout.

Trajectory optimization solves endpoint configurations by IK, interpolates
linearly, then optimizes the full configuration stack with smoothness,
acceleration/jerk stencils, limits, and per-timestep plus swept-capsule
collision penalties. Endpoints are anchored softly by high-weight rest costs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import costs as ck
from .beam import IkLaneProblem
from .collision import WorldModel, transform_primitive
from .errors import PlanningError
from .liegroups import Transform2, Transform3, quat_rotate
from .robot import RobotModel, fk_arrays, load_robot
from .solver import Problem, SolveOptions, SolveReport, VariableSet, solve

# a base regularization weight at or above this pins the base exactly
# (the SE(2) variable is dropped, reducing mobile IK to arm-only IK)
BASE_PINNED = 1e12

ANCHOR_WEIGHT = 1e3


@dataclass
class IkRequest:
    model: RobotModel
    target_link: str
    target_pose: Transform3
    weights: ck.CostWeights = field(default_factory=ck.CostWeights)
    seeds: int = 64
    total_steps: int = 16
    prune_after: int = 6
    keep: int = 4
    success_pos_tol: float = 0.005
    success_rot_tol: float = 0.05
    rng_seed: int = 0
    optimize_base: bool = False
    base_reg_weight: float = 0.0

    def __post_init__(self):
        if not 0 < self.prune_after < self.total_steps:
            raise ValueError("need 0 < prune_after < total_steps")
        if not 1 <= self.keep <= self.seeds:
            raise ValueError("need 1 <= keep <= seeds")


@dataclass
class IkResult:
    q: np.ndarray
    base: Transform2 | None
    pos_error: float
    rot_error: float
    success: bool
    report: SolveReport

    def to_json(self, include_timing: bool = False) -> dict:
        out = {
            "q": self.q.tolist(),
            "pos_error": self.pos_error,
            "rot_error": self.rot_error,
            "success": self.success,
            "report": self.report.to_json(include_timing=include_timing),
        }
        if self.base is not None:
            out["base"] = {
                "angle": self.base.angle,
                "xy": self.base.translation.tolist(),
            }
        return out


def sample_seed_configurations(model: RobotModel, count: int, rng_seed: int) -> np.ndarray:
    """Uniform in-limit seeds from per-seed counter-based generators.

    Seed i comes from Philox keyed by (rng_seed, i): the draw for a given
    index never depends on batch size or evaluation order. Continuous joints
    draw uniformly from (-pi, pi].
    """
    n = model.actuated_count
    lo = np.where(np.isfinite(model.lower_limits), model.lower_limits, -math.pi)
    hi = np.where(np.isfinite(model.upper_limits), model.upper_limits, math.pi)
    unbounded = ~(np.isfinite(model.lower_limits) & np.isfinite(model.upper_limits))
    out = np.empty((count, n))
    for i in range(count):
        gen = np.random.Generator(
            np.random.Philox(key=np.array([rng_seed, i], dtype=np.uint64))
        )
        draw = gen.uniform(lo, hi)
        out[i] = np.where(unbounded, -draw, draw)  # flips [-pi, pi) to (-pi, pi]
    return out


def _pose_errors(model, link, target, q, base: Transform2 | None):
    quat, pos, _, _ = fk_arrays(model, q)
    idx = model.link_index(link)
    current = Transform3.from_parts(quat[idx], pos[idx])
    if base is not None:
        current = base.to_transform3().compose(current)
    rel = target.inverse().compose(current)
    return float(np.linalg.norm(rel.translation)), float(np.linalg.norm(rel.rotation.log()))


def _beam_search(req: IkRequest, use_base: bool) -> IkResult:
    problem = IkLaneProblem(
        req.model,
        req.target_link,
        req.target_pose,
        position_weight=req.weights.pose_position,
        orientation_weight=req.weights.pose_orientation,
        limit_weight=req.weights.limit,
        rest_weight=req.weights.rest,
        use_base=use_base,
        base_reg_weight=req.base_reg_weight if use_base else 0.0,
    )
    q0 = sample_seed_configurations(req.model, req.seeds, req.rng_seed)
    state = problem.start_state(q0)
    state = problem.run(state, req.prune_after)

    order = np.argsort(state.cost, kind="stable")[: req.keep]
    survivors = state.select(order)
    survivors = problem.run(survivors, req.total_steps - req.prune_after)

    winner = int(np.argmin(survivors.cost))
    q = survivors.q[winner].copy()
    base = None
    if use_base:
        base = Transform2(
            float(survivors.base_angle[winner]), survivors.base_xy[winner].copy()
        )
    pos_err, rot_err = _pose_errors(req.model, req.target_link, req.target_pose, q, base)
    success = pos_err < req.success_pos_tol and rot_err < req.success_rot_tol

    history = [float(h[winner]) for h in survivors.history]
    final_values = VariableSet.of(q=q) if base is None else VariableSet.of(q=q, base=base)
    report = SolveReport(
        final_values=final_values,
        initial_cost=history[0],
        final_cost=float(survivors.cost[winner]),
        iterations_run=req.total_steps,
        termination="max_iterations",
        cost_history=history,
    )
    return IkResult(
        q=q, base=base, pos_error=pos_err, rot_error=rot_err, success=success, report=report
    )


def solve_ik_beam(req: IkRequest) -> IkResult:
    """Multi-seed IK with mid-optimization pruning; never raises on unreachable targets."""
    return _beam_search(req, use_base=False)


def solve_ik_mobile(req: IkRequest) -> IkResult:
    """IK with the SE(2) base pose as an extra optimization variable.

    Each seed starts with the base at identity. A base_reg_weight at or above
    BASE_PINNED eliminates the base variable entirely, reproducing
    solve_ik_beam exactly.
    """
    if req.base_reg_weight >= BASE_PINNED:
        result = _beam_search(req, use_base=False)
        result.base = Transform2.identity()
        return result
    return _beam_search(req, use_base=True)


# ---------------------------------------------------------------------------
# Trajectory optimization
# ---------------------------------------------------------------------------


@dataclass
class TrajRequest:
    model: RobotModel
    start_pose: Transform3
    goal_pose: Transform3
    timesteps: int = 20
    dt: float = 0.1
    world: WorldModel = field(default_factory=WorldModel)
    weights: ck.CostWeights = field(
        default_factory=lambda: ck.CostWeights(rest=0.0, world_collision=30.0)
    )
    target_link: str | None = None  # defaults to the last link
    eta_world: float = 0.05
    eta_self: float = 0.01
    rng_seed: int = 0
    base_pose: Transform3 = field(default_factory=Transform3.identity)
    max_iterations: int = 150
    anchor_weight: float = ANCHOR_WEIGHT
    ik_retries: int = 5

    def __post_init__(self):
        if self.timesteps < 5:
            raise ValueError("trajectory needs at least 5 timesteps for the stencils")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass
class TrajResult:
    qs: np.ndarray  # (T, n)
    report: SolveReport
    collision_free: bool
    min_signed_distance: float
    start_pos_error: float
    start_rot_error: float
    goal_pos_error: float
    goal_rot_error: float
    success: bool

    def to_json(self, include_timing: bool = False) -> dict:
        return {
            "qs": self.qs.tolist(),
            "collision_free": self.collision_free,
            "min_signed_distance": self.min_signed_distance,
            "start_pos_error": self.start_pos_error,
            "start_rot_error": self.start_rot_error,
            "goal_pos_error": self.goal_pos_error,
            "goal_rot_error": self.goal_rot_error,
            "success": self.success,
            "report": self.report.to_json(include_timing=include_timing),
        }


def _world_sphere_snapshot(model, q, world_links):
    quat, pos, _, _ = fk_arrays(model, q)
    out = []
    for link in world_links:
        idx = model.link_index(link)
        for s in model.collision_spheres[link]:
            out.append((quat_rotate(quat[idx], s.center) + pos[idx], s.radius))
    return out


def trajectory_signed_distances(model: RobotModel, qs: np.ndarray, world: WorldModel):
    """Hard-minimum static and swept signed distances along a trajectory.

    Returns (static (T,), swept (T-1,)); infinities when the world is empty.
    """
    from . import collision as col

    links = [l for l in model.link_names if model.collision_spheres.get(l)]
    t_count = qs.shape[0]
    static = np.full(t_count, np.inf)
    swept = np.full(max(t_count - 1, 0), np.inf)
    if not world.obstacles or not links:
        return static, swept
    snapshots = [_world_sphere_snapshot(model, qs[t], links) for t in range(t_count)]
    for t in range(t_count):
        for center, radius in snapshots[t]:
            for obs in world.obstacles:
                d, _ = col.sphere_obstacle_distance(center, radius, obs)
                static[t] = min(static[t], d)
    for t in range(t_count - 1):
        for (c0, r0), (c1, _) in zip(snapshots[t], snapshots[t + 1]):
            for obs in world.obstacles:
                d, _, _ = col.capsule_obstacle_distance(c0, c1, r0, obs)
                swept[t] = min(swept[t], d)
    return static, swept


def _endpoint_ik(req: TrajRequest, pose: Transform3, label: str) -> np.ndarray:
    link = req.target_link or req.model.link_names[-1]
    # endpoint solves keep a little rest regularization even when the
    # trajectory itself uses none, so the redundant DoF lands deterministically
    ik_weights = ck.CostWeights.from_json(
        {**req.weights.to_json(), "rest": max(req.weights.rest, 0.01)}
    )
    if ik_weights.pose_position == 0.0:
        ik_weights.pose_position = ck.CostWeights().pose_position
    if ik_weights.pose_orientation == 0.0:
        ik_weights.pose_orientation = ck.CostWeights().pose_orientation
    for attempt in range(req.ik_retries):
        ik = solve_ik_beam(
            IkRequest(
                model=req.model,
                target_link=link,
                target_pose=pose,
                weights=ik_weights,
                rng_seed=req.rng_seed + 7919 * attempt,
            )
        )
        if not ik.success:
            continue
        if req.world.obstacles:
            static, _ = trajectory_signed_distances(req.model, ik.q[None, :], req.world)
            if static[0] < req.eta_world:
                continue
        return ik.q
    raise PlanningError(f"could not find a collision-free IK solution for the {label} pose")


def plan_trajectory(req: TrajRequest) -> TrajResult:
    """Collision-aware trajectory optimization from a straight-line initialization."""
    model = req.model
    n = model.actuated_count
    t_count = req.timesteps
    link = req.target_link or model.link_names[-1]
    w = req.weights

    # express everything in the robot base frame so world placement cannot leak in
    base_inv = req.base_pose.inverse()
    start_local = base_inv.compose(req.start_pose)
    goal_local = base_inv.compose(req.goal_pose)
    world_local = WorldModel(
        [transform_primitive(base_inv, p) for p in req.world.obstacles]
    )
    local_req = TrajRequest(
        model=model,
        start_pose=start_local,
        goal_pose=goal_local,
        timesteps=req.timesteps,
        dt=req.dt,
        world=world_local,
        weights=w,
        target_link=link,
        eta_world=req.eta_world,
        eta_self=req.eta_self,
        rng_seed=req.rng_seed,
        max_iterations=req.max_iterations,
        anchor_weight=req.anchor_weight,
        ik_retries=req.ik_retries,
    )

    q_start = _endpoint_ik(local_req, start_local, "start")
    q_goal = _endpoint_ik(local_req, goal_local, "goal")

    alphas = np.linspace(0.0, 1.0, t_count)
    init = q_start[None, :] * (1 - alphas[:, None]) + q_goal[None, :] * alphas[:, None]

    variables = VariableSet()
    names = [f"q{t}" for t in range(t_count)]
    for t in range(t_count):
        variables.add(names[t], init[t])

    cost_terms = [
        ck.rest_cost(names[0], q_start, weight=req.anchor_weight, name="anchor_start"),
        ck.rest_cost(names[-1], q_goal, weight=req.anchor_weight, name="anchor_goal"),
    ]
    for t in range(1, t_count):
        cost_terms.append(
            ck.smoothness_cost(model, names[t - 1], names[t], weight=w.smoothness)
        )
        if w.velocity > 0:
            cost_terms.append(
                ck.velocity_limit_cost(model, names[t - 1], names[t], req.dt, weight=w.velocity)
            )
    for t in range(2, t_count - 2):
        window = names[t - 2 : t + 3]
        if w.acceleration > 0:
            cost_terms.append(
                ck.acceleration_cost(model, window, req.dt, weight=w.acceleration, name=f"accel{t}")
            )
        if w.jerk > 0:
            cost_terms.append(
                ck.jerk_cost(model, window, req.dt, weight=w.jerk, name=f"jerk{t}")
            )
    for t in range(t_count):
        if w.limit > 0:
            cost_terms.append(ck.limit_cost(model, names[t], weight=w.limit, name=f"limit{t}"))
        if w.rest > 0:
            cost_terms.append(
                ck.rest_cost(names[t], model.rest_pose, weight=w.rest, name=f"rest{t}")
            )
        if w.self_collision > 0 and model.self_collision_pairs:
            cost_terms.append(
                ck.self_collision_cost(
                    model, names[t], eta=req.eta_self, weight=w.self_collision, name=f"self{t}"
                )
            )
        if w.world_collision > 0 and world_local.obstacles:
            cost_terms.append(
                ck.world_collision_cost(
                    model, names[t], world_local, eta=req.eta_world,
                    weight=w.world_collision, name=f"world{t}",
                )
            )
    if w.world_collision > 0 and world_local.obstacles:
        for t in range(1, t_count):
            cost_terms.append(
                ck.swept_collision_cost(
                    model, names[t - 1], names[t], world_local, eta=req.eta_world,
                    weight=w.world_collision, name=f"swept{t}",
                )
            )

    problem = Problem(variables, cost_terms)
    report = solve(problem, SolveOptions(max_iterations=req.max_iterations))

    qs = np.stack([report.final_values.value(name) for name in names])
    static, swept = trajectory_signed_distances(model, qs, world_local)
    min_sd = float(min(static.min(), swept.min() if swept.size else np.inf))
    collision_free = (not world_local.obstacles) or min_sd >= 0.0

    s_pos, s_rot = _pose_errors(model, link, start_local, qs[0], None)
    g_pos, g_rot = _pose_errors(model, link, goal_local, qs[-1], None)
    success = collision_free and max(s_pos, g_pos) < 0.005 and max(s_rot, g_rot) < 0.05
    return TrajResult(
        qs=qs,
        report=report,
        collision_free=collision_free,
        min_signed_distance=min_sd,
        start_pos_error=s_pos,
        start_rot_error=s_rot,
        goal_pos_error=g_pos,
        goal_rot_error=g_rot,
        success=success,
    )


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------


def load_request(path: str):
    """Load an IkRequest or TrajRequest from a problem JSON file.

    Relative robot/world paths resolve against the problem file's directory.
    """
    with open(path) as f:
        data = json.load(f)
    base_dir = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    model = load_robot(
        resolve(data["urdf"]),
        resolve(data["sidecar"]) if data.get("sidecar") else None,
    )
    weights = (
        ck.CostWeights.from_json(data["weights"]) if "weights" in data else ck.CostWeights()
    )
    options = data.get("options", {})
    task = data.get("task", "ik")
    if task in ("ik", "ik_mobile"):
        req = IkRequest(
            model=model,
            target_link=data.get("target_link", model.link_names[-1]),
            target_pose=Transform3.from_json(data["target_pose"]),
            weights=weights,
            **options,
        )
        if task == "ik_mobile":
            req.optimize_base = True
        return req
    if task == "traj":
        world = WorldModel.from_json(data["world"]) if "world" in data else WorldModel()
        if "world_file" in data:
            with open(resolve(data["world_file"])) as f:
                world = WorldModel.from_json(json.load(f))
        return TrajRequest(
            model=model,
            start_pose=Transform3.from_json(data["start_pose"]),
            goal_pose=Transform3.from_json(data["goal_pose"]),
            world=world,
            weights=weights,
            target_link=data.get("target_link"),
            **options,
        )
    raise ValueError(f"unknown task '{task}'")
