"""Residual library for kinematic optimization.

Each builder returns a solver CostTerm binding named variables, with the raw
(pre-weight) residual and an analytical Jacobian; the solver's numeric
differentiation remains available by passing ``analytic=False``. Residuals:

- pose: log(T_target^-1 T_current) as a translation-first twist
- limit: max(0, q - upper) + max(0, lower - q)
- velocity: max(0, |q_t - q_{t-1}| - limit * dt)
- rest: q - q_rest
- smoothness: q_t - q_{t-1}
- acceleration / jerk: five-point central stencils over consecutive timesteps
- manipulability: 1 / (sqrt(det of the translational Jacobian Gram) + eps)
- self / world / swept collision: activation of (soft-)minimum signed distance

max(0, .) kinks use the one-sided subgradient 0 at the boundary. Collision
distances over multiple sphere pairs aggregate with a smooth minimum
(sharpness beta in 1/m) to stay differentiable; a hard minimum is available
via ``hard_min=True``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import collision as col
from .liegroups import (
    Transform2,
    Transform3,
    quat_conj,
    quat_mul,
    quat_rotate,
    quat_to_matrix,
    se3_adjoint,
    se3_log_arrays,
    se3_right_jacobian_inv,
)
from .robot import RobotModel, fk_arrays, translational_jacobian_with_derivative
from .solver import CostTerm

SOFTMIN_SHARPNESS = 100.0  # 1/m
MANIP_EPS = 1e-6


@dataclass
class CostWeights:
    """Named scalar weights, one per cost family; tuned live by the viewer."""

    pose_position: float = 50.0
    pose_orientation: float = 10.0
    limit: float = 100.0
    velocity: float = 10.0
    rest: float = 0.01
    smoothness: float = 10.0
    acceleration: float = 1.0
    jerk: float = 0.1
    manipulability: float = 0.0
    self_collision: float = 5.0
    world_collision: float = 20.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value < 0.0:
                raise ValueError(f"weight '{f.name}' must be nonnegative, got {value}")
            setattr(self, f.name, float(value))

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(data: dict) -> "CostWeights":
        known = {f.name for f in fields(CostWeights)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown cost weight names: {sorted(unknown)}")
        return CostWeights(**data)

    @staticmethod
    def names() -> list[str]:
        return [f.name for f in fields(CostWeights)]


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------

# embedding of se(2) tangents (vx, vy, w) into translation-first se(3)
_SE2_EMBED = np.zeros((6, 3))
_SE2_EMBED[0, 0] = 1.0
_SE2_EMBED[1, 1] = 1.0
_SE2_EMBED[5, 2] = 1.0


def pose_cost(
    model: RobotModel,
    q_var: str,
    link: str,
    target: Transform3,
    base_var: str | None = None,
    position_weight: float = 1.0,
    orientation_weight: float = 1.0,
    name: str | None = None,
    analytic: bool = True,
) -> CostTerm:
    """Twist error between a link pose (optionally base-composed) and a target."""
    idx = model.link_index(link)
    target_inv = target.inverse()
    ti_q, ti_t = target_inv.rotation.wxyz, target_inv.translation

    def current(q, base):
        quat, pos, _, _ = fk_arrays(model, q)
        fq, fp = quat[idx], pos[idx]
        if base is not None:
            b = base.to_transform3() if isinstance(base, Transform2) else base
            fq, fp = quat_mul(b.rotation.wxyz, fq), b.rotation.apply(fp) + b.translation
        return fq, fp

    def evaluator(q, *base):
        fq, fp = current(q, base[0] if base else None)
        e_q = quat_mul(ti_q, fq)
        e_t = ti_t + quat_rotate(ti_q, fp)
        return se3_log_arrays(e_q, e_t)

    def jacobian(q, *base):
        quat, pos, joint_pos, joint_axis = fk_arrays(model, q)
        fq, fp = quat[idx], pos[idx]
        from .robot import _point_jacobian_impl

        j_geom = _point_jacobian_impl(model, fp, joint_pos, joint_axis, idx, rotational=True)
        r_fk = quat_to_matrix(fq)
        body = np.vstack([r_fk.T @ j_geom[:3], r_fk.T @ j_geom[3:]])

        if base:
            b3 = base[0].to_transform3() if isinstance(base[0], Transform2) else base[0]
            cur_q = quat_mul(b3.rotation.wxyz, fq)
            cur_t = b3.rotation.apply(fp) + b3.translation
        else:
            cur_q, cur_t = fq, fp
        residual = se3_log_arrays(quat_mul(ti_q, cur_q), ti_t + quat_rotate(ti_q, cur_t))
        j_rinv = se3_right_jacobian_inv(residual)
        blocks = [j_rinv @ body]
        if base:
            fk_inv_q = quat_conj(fq)
            ad = se3_adjoint(fk_inv_q, -quat_rotate(fk_inv_q, fp))
            block = j_rinv @ ad
            if isinstance(base[0], Transform2):
                block = block @ _SE2_EMBED
            blocks.append(block)
        return blocks

    weight = np.concatenate(
        [np.full(3, float(position_weight)), np.full(3, float(orientation_weight))]
    )
    refs = [q_var] + ([base_var] if base_var else [])
    return CostTerm(
        name=name or f"pose[{link}]",
        residual_dim=6,
        variable_refs=refs,
        weight=weight,
        evaluator=evaluator,
        jacobian=jacobian if analytic else None,
    )


# ---------------------------------------------------------------------------
# Joint-space penalties
# ---------------------------------------------------------------------------


def limit_cost(
    model: RobotModel, q_var: str, weight: float = 1.0, name: str = "limit", analytic: bool = True
) -> CostTerm:
    """Per-joint excursion beyond mechanical bounds; continuous joints contribute 0."""
    lower, upper = model.lower_limits, model.upper_limits

    def evaluator(q):
        return np.maximum(0.0, q - upper) + np.maximum(0.0, lower - q)

    def jacobian(q):
        g = np.where(q > upper, 1.0, 0.0) + np.where(q < lower, -1.0, 0.0)
        return [np.diag(g)]

    n = model.actuated_count
    return CostTerm(
        name=name,
        residual_dim=n,
        variable_refs=[q_var],
        weight=np.full(n, float(weight)),
        evaluator=evaluator,
        jacobian=jacobian if analytic else None,
    )


def velocity_limit_cost(
    model: RobotModel,
    prev_var: str,
    curr_var: str,
    dt: float,
    weight: float = 1.0,
    name: str | None = None,
    analytic: bool = True,
) -> CostTerm:
    """Per-step displacement beyond velocity_limit * dt; unlimited joints contribute 0."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    budget = model.velocity_limits * dt

    def evaluator(q_prev, q_curr):
        step = q_curr - q_prev
        out = np.abs(step) - budget
        return np.where(np.isfinite(budget), np.maximum(0.0, out), 0.0)

    def jacobian(q_prev, q_curr):
        step = q_curr - q_prev
        active = np.isfinite(budget) & (np.abs(step) > budget)
        g = np.where(active, np.sign(step), 0.0)
        return [np.diag(-g), np.diag(g)]

    n = model.actuated_count
    return CostTerm(
        name=name or f"velocity[{prev_var}->{curr_var}]",
        residual_dim=n,
        variable_refs=[prev_var, curr_var],
        weight=np.full(n, float(weight)),
        evaluator=evaluator,
        jacobian=jacobian if analytic else None,
    )


def velocity_limit_cost_direct(
    model: RobotModel, rate_var: str, weight: float = 1.0, name: str = "velocity_direct"
) -> CostTerm:
    """Variant over an explicit joint-rate variable: max(0, |qdot| - limit)."""
    limits = model.velocity_limits

    def evaluator(qd):
        out = np.abs(qd) - limits
        return np.where(np.isfinite(limits), np.maximum(0.0, out), 0.0)

    def jacobian(qd):
        active = np.isfinite(limits) & (np.abs(qd) > limits)
        return [np.diag(np.where(active, np.sign(qd), 0.0))]

    n = model.actuated_count
    return CostTerm(
        name=name,
        residual_dim=n,
        variable_refs=[rate_var],
        weight=np.full(n, float(weight)),
        evaluator=evaluator,
        jacobian=jacobian,
    )


def rest_cost(
    q_var: str, q_rest: np.ndarray, weight: float = 1.0, name: str = "rest", analytic: bool = True
) -> CostTerm:
    q_rest = np.asarray(q_rest, dtype=float).reshape(-1)
    n = q_rest.size
    return CostTerm(
        name=name,
        residual_dim=n,
        variable_refs=[q_var],
        weight=np.full(n, float(weight)),
        evaluator=lambda q: q - q_rest,
        jacobian=(lambda q: [np.eye(n)]) if analytic else None,
    )


def smoothness_cost(
    model: RobotModel,
    prev_var: str,
    curr_var: str,
    weight: float = 1.0,
    name: str | None = None,
    analytic: bool = True,
) -> CostTerm:
    n = model.actuated_count
    return CostTerm(
        name=name or f"smooth[{prev_var}->{curr_var}]",
        residual_dim=n,
        variable_refs=[prev_var, curr_var],
        weight=np.full(n, float(weight)),
        evaluator=lambda a, b: b - a,
        jacobian=(lambda a, b: [-np.eye(n), np.eye(n)]) if analytic else None,
    )


# five-point central stencils; exact on cubics (jerk) and quartics (acceleration)
_ACCEL_COEFFS = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_JERK_COEFFS = np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / 2.0


def _stencil_cost(model, q_vars, dt, coeffs, scale, weight, name, analytic):
    if len(q_vars) != 5:
        raise ValueError(f"stencil costs need 5 consecutive timesteps, got {len(q_vars)}")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = model.actuated_count
    c = coeffs / scale

    def evaluator(*qs):
        return sum(ck * qk for ck, qk in zip(c, qs))

    def jacobian(*qs):
        return [ck * np.eye(n) for ck in c]

    return CostTerm(
        name=name,
        residual_dim=n,
        variable_refs=list(q_vars),
        weight=np.full(n, float(weight)),
        evaluator=evaluator,
        jacobian=jacobian if analytic else None,
    )


def acceleration_cost(
    model: RobotModel,
    q_vars: list[str],
    dt: float,
    weight: float = 1.0,
    name: str = "acceleration",
    analytic: bool = True,
) -> CostTerm:
    return _stencil_cost(model, q_vars, dt, _ACCEL_COEFFS, dt * dt, weight, name, analytic)


def jerk_cost(
    model: RobotModel,
    q_vars: list[str],
    dt: float,
    weight: float = 1.0,
    name: str = "jerk",
    analytic: bool = True,
) -> CostTerm:
    return _stencil_cost(model, q_vars, dt, _JERK_COEFFS, dt**3, weight, name, analytic)


# ---------------------------------------------------------------------------
# Manipulability
# ---------------------------------------------------------------------------


def manipulability_cost(
    model: RobotModel,
    q_var: str,
    link: str,
    weight: float = 1.0,
    eps: float = MANIP_EPS,
    name: str | None = None,
    analytic: bool = True,
) -> CostTerm:
    """Inverse Yoshikawa measure of the translational Jacobian.

    The measure is the product of singular values of the 3 x n translational
    block: sqrt(det(J J^T)) for n >= 3 and sqrt(det(J^T J)) for n < 3 (the
    planar-arm case, where J J^T is always rank-deficient). At singularities
    the residual caps at 1/eps and the gradient is zero.
    """
    model.link_index(link)

    def measure_and_grad(q):
        jac, djac = translational_jacobian_with_derivative(model, q, link)
        n = model.actuated_count
        gram = jac @ jac.T if n >= 3 else jac.T @ jac
        det = float(np.linalg.det(gram))
        if det <= 1e-18:
            return 0.0, np.zeros(n)
        m = math.sqrt(det)
        gram_inv = np.linalg.inv(gram)
        grad = np.empty(n)
        for a in range(n):
            dg = (
                djac[a] @ jac.T + jac @ djac[a].T
                if n >= 3
                else djac[a].T @ jac + jac.T @ djac[a]
            )
            grad[a] = 0.5 * m * float(np.trace(gram_inv @ dg))
        return m, grad

    def evaluator(q):
        m, _ = measure_and_grad(q)
        return np.array([1.0 / (m + eps)])

    def jacobian(q):
        m, grad = measure_and_grad(q)
        return [(-grad / (m + eps) ** 2)[None, :]]

    return CostTerm(
        name=name or f"manipulability[{link}]",
        residual_dim=1,
        variable_refs=[q_var],
        weight=np.array([float(weight)]),
        evaluator=evaluator,
        jacobian=jacobian if analytic else None,
    )


# ---------------------------------------------------------------------------
# Collision
# ---------------------------------------------------------------------------


def _softmin(ds: np.ndarray, sharpness: float, hard: bool):
    """Minimum aggregate and its gradient weights over candidate distances."""
    ds = np.asarray(ds, dtype=float)
    if hard or ds.size == 1:
        k = int(np.argmin(ds))
        w = np.zeros(ds.size)
        w[k] = 1.0
        return float(ds[k]), w
    dmin = float(ds.min())
    z = np.exp(-sharpness * (ds - dmin))
    s = float(z.sum())
    return dmin - math.log(s) / sharpness, z / s


def _world_spheres(model, fk_quat, fk_pos, link):
    idx = model.link_index(link)
    lq, lp = fk_quat[idx], fk_pos[idx]
    return [(quat_rotate(lq, s.center) + lp, s.radius) for s in model.collision_spheres[link]]


def _point_jacobian_from_data(model, joint_pos, joint_axis, link_idx, point):
    from .robot import _point_jacobian_impl

    return _point_jacobian_impl(model, point, joint_pos, joint_axis, link_idx, rotational=False)


def self_collision_cost(
    model: RobotModel,
    q_var: str,
    eta: float = 0.01,
    weight: float = 1.0,
    sharpness: float = SOFTMIN_SHARPNESS,
    hard_min: bool = False,
    name: str = "self_collision",
    analytic: bool = True,
) -> CostTerm:
    """One activation row per self-collision link pair.

    The pair distance is the (soft-)minimum over all sphere-sphere
    combinations between the two links.
    """
    pairs = model.self_collision_pairs
    if not pairs:
        raise ValueError("model declares no self-collision pairs")

    def pair_rows(q, want_jacobian):
        quat, pos, joint_pos, joint_axis = fk_arrays(model, q)
        rows = np.empty(len(pairs))
        jac = np.zeros((len(pairs), model.actuated_count)) if want_jacobian else None
        for p_idx, (link_a, link_b) in enumerate(pairs):
            sph_a = _world_spheres(model, quat, pos, link_a)
            sph_b = _world_spheres(model, quat, pos, link_b)
            ds = []
            dirs = []
            for ca, ra in sph_a:
                for cb, rb in sph_b:
                    direction = ca - cb
                    dist = float(np.linalg.norm(direction))
                    ds.append(dist - ra - rb)
                    dirs.append(direction / dist if dist > 1e-12 else np.zeros(3))
            d_agg, w = _softmin(np.array(ds), sharpness, hard_min)
            rows[p_idx] = col.activation(d_agg, eta)
            if not want_jacobian:
                continue
            act_d = col.activation_deriv(d_agg, eta)
            if act_d == 0.0:
                continue
            ia, ib = model.link_index(link_a), model.link_index(link_b)
            row = np.zeros(model.actuated_count)
            k = 0
            for ca, _ in sph_a:
                ja = _point_jacobian_from_data(model, joint_pos, joint_axis, ia, ca)
                for cb, _ in sph_b:
                    if w[k] != 0.0:
                        jb = _point_jacobian_from_data(model, joint_pos, joint_axis, ib, cb)
                        row += w[k] * (dirs[k] @ (ja - jb))
                    k += 1
            jac[p_idx] = act_d * row
        return rows, jac

    return CostTerm(
        name=name,
        residual_dim=len(pairs),
        variable_refs=[q_var],
        weight=np.full(len(pairs), float(weight)),
        evaluator=lambda q: pair_rows(q, False)[0],
        jacobian=(lambda q: [pair_rows(q, True)[1]]) if analytic else None,
    )


def world_collision_cost(
    model: RobotModel,
    q_var: str,
    world: col.WorldModel,
    eta: float = 0.05,
    weight: float = 1.0,
    sharpness: float = SOFTMIN_SHARPNESS,
    hard_min: bool = False,
    name: str = "world_collision",
    analytic: bool = True,
) -> CostTerm:
    """One activation row per (sphere-bearing link, obstacle) pair."""
    links = [l for l in model.link_names if model.collision_spheres.get(l)]
    pairs = [(l, o) for l in links for o in range(len(world.obstacles))]
    if not pairs:
        raise ValueError("no (link, obstacle) pairs: empty world or no collision spheres")

    def pair_rows(q, want_jacobian):
        quat, pos, joint_pos, joint_axis = fk_arrays(model, q)
        rows = np.empty(len(pairs))
        jac = np.zeros((len(pairs), model.actuated_count)) if want_jacobian else None
        for p_idx, (link, o_idx) in enumerate(pairs):
            obstacle = world.obstacles[o_idx]
            spheres = _world_spheres(model, quat, pos, link)
            ds, grads = [], []
            for center, radius in spheres:
                d, g = col.sphere_obstacle_distance(center, radius, obstacle)
                ds.append(d)
                grads.append(g)
            d_agg, w = _softmin(np.array(ds), sharpness, hard_min)
            rows[p_idx] = col.activation(d_agg, eta)
            if not want_jacobian:
                continue
            act_d = col.activation_deriv(d_agg, eta)
            if act_d == 0.0:
                continue
            li = model.link_index(link)
            row = np.zeros(model.actuated_count)
            for k, (center, _) in enumerate(spheres):
                if w[k] != 0.0:
                    jp = _point_jacobian_from_data(model, joint_pos, joint_axis, li, center)
                    row += w[k] * (grads[k] @ jp)
            jac[p_idx] = act_d * row
        return rows, jac

    return CostTerm(
        name=name,
        residual_dim=len(pairs),
        variable_refs=[q_var],
        weight=np.full(len(pairs), float(weight)),
        evaluator=lambda q: pair_rows(q, False)[0],
        jacobian=(lambda q: [pair_rows(q, True)[1]]) if analytic else None,
    )


def swept_collision_cost(
    model: RobotModel,
    prev_var: str,
    curr_var: str,
    world: col.WorldModel,
    eta: float = 0.05,
    weight: float = 1.0,
    sharpness: float = SOFTMIN_SHARPNESS,
    hard_min: bool = False,
    name: str | None = None,
    analytic: bool = True,
) -> CostTerm:
    """Continuous collision between consecutive timesteps.

    Each link sphere at t is connected to the corresponding sphere at t+1 to
    form a capsule; rows aggregate capsules per (link, obstacle) pair.
    """
    links = [l for l in model.link_names if model.collision_spheres.get(l)]
    pairs = [(l, o) for l in links for o in range(len(world.obstacles))]
    if not pairs:
        raise ValueError("no (link, obstacle) pairs: empty world or no collision spheres")

    def pair_rows(q_prev, q_curr, want_jacobian):
        quat0, pos0, jp0, ja0 = fk_arrays(model, q_prev)
        quat1, pos1, jp1, ja1 = fk_arrays(model, q_curr)
        rows = np.empty(len(pairs))
        n = model.actuated_count
        jac_prev = np.zeros((len(pairs), n)) if want_jacobian else None
        jac_curr = np.zeros((len(pairs), n)) if want_jacobian else None
        for p_idx, (link, o_idx) in enumerate(pairs):
            obstacle = world.obstacles[o_idx]
            sph0 = _world_spheres(model, quat0, pos0, link)
            sph1 = _world_spheres(model, quat1, pos1, link)
            ds, grads = [], []
            for (c0, r0), (c1, _) in zip(sph0, sph1):
                d, ga, gb = col.capsule_obstacle_distance(c0, c1, r0, obstacle)
                ds.append(d)
                grads.append((ga, gb))
            d_agg, w = _softmin(np.array(ds), sharpness, hard_min)
            rows[p_idx] = col.activation(d_agg, eta)
            if not want_jacobian:
                continue
            act_d = col.activation_deriv(d_agg, eta)
            if act_d == 0.0:
                continue
            li = model.link_index(link)
            row0 = np.zeros(n)
            row1 = np.zeros(n)
            for k, ((c0, _), (c1, _)) in enumerate(zip(sph0, sph1)):
                if w[k] == 0.0:
                    continue
                ga, gb = grads[k]
                row0 += w[k] * (ga @ _point_jacobian_from_data(model, jp0, ja0, li, c0))
                row1 += w[k] * (gb @ _point_jacobian_from_data(model, jp1, ja1, li, c1))
            jac_prev[p_idx] = act_d * row0
            jac_curr[p_idx] = act_d * row1
        return rows, jac_prev, jac_curr

    return CostTerm(
        name=name or f"swept_collision[{prev_var}->{curr_var}]",
        residual_dim=len(pairs),
        variable_refs=[prev_var, curr_var],
        weight=np.full(len(pairs), float(weight)),
        evaluator=lambda a, b: pair_rows(a, b, False)[0],
        jacobian=(lambda a, b: list(pair_rows(a, b, True)[1:])) if analytic else None,
    )
