"""Vectorized multi-seed Levenberg-Marquardt engine for inverse kinematics.

Runs B independent IK problems (same robot and target structure, different
seeds) as batched array operations: one FK / Jacobian / linear-solve pass per
LM step covers every lane. Each lane keeps its own damping parameter and
accepts a step only if its own cost decreases; a rejected lane keeps its
values and raises damping (one proposal per step, the batch-friendly LM
formulation). Everything is deterministic: identical inputs give bitwise
identical outputs regardless of how lanes are later pruned or reordered.

The residual stack per lane is the IK objective: pose twist (6 rows), joint
limits (n), rest regularization (n), plus optional SE(2) base regularization
(3) when a mobile base is optimized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import _SE2_EMBED
from .liegroups import (
    quat_conj,
    quat_mul,
    quat_rotate,
    quat_to_matrix,
    rot2,
    se2_exp_arrays,
    se3_adjoint,
    se3_log_arrays,
    se3_right_jacobian_inv,
    wrap_angle,
)
from .robot import RobotModel, _point_jacobian_impl, fk_arrays

DAMPING_INIT = 1e-4
DAMPING_UP = 10.0
DAMPING_DOWN = 1.0 / 3.0
DAMPING_MIN = 1e-12
DAMPING_MAX = 1e10
DIAG_CLAMP = 1e-8


@dataclass
class LaneState:
    """State of B parallel IK lanes."""

    q: np.ndarray  # (B, n)
    base_angle: np.ndarray | None  # (B,)
    base_xy: np.ndarray | None  # (B, 2)
    damping: np.ndarray  # (B,)
    cost: np.ndarray  # (B,)
    history: list  # per-step cost snapshots, each (B,)

    @property
    def lanes(self) -> int:
        return self.q.shape[0]

    def select(self, indices: np.ndarray) -> "LaneState":
        return LaneState(
            q=self.q[indices].copy(),
            base_angle=None if self.base_angle is None else self.base_angle[indices].copy(),
            base_xy=None if self.base_xy is None else self.base_xy[indices].copy(),
            damping=self.damping[indices].copy(),
            cost=self.cost[indices].copy(),
            history=[h[indices].copy() for h in self.history],
        )


class IkLaneProblem:
    """Batched IK objective bound to one robot, link, and target pose."""

    def __init__(
        self,
        model: RobotModel,
        link: str,
        target,
        position_weight: float,
        orientation_weight: float,
        limit_weight: float,
        rest_weight: float,
        rest_pose: np.ndarray | None = None,
        use_base: bool = False,
        base_reg_weight: float = 0.0,
    ):
        self.model = model
        self.link_idx = model.link_index(link)
        t_inv = target.inverse()
        self.ti_q = t_inv.rotation.wxyz
        self.ti_t = t_inv.translation
        self.use_base = use_base
        self.rest_pose = model.rest_pose if rest_pose is None else np.asarray(rest_pose, float)
        n = model.actuated_count
        rows = [np.full(3, position_weight), np.full(3, orientation_weight)]
        rows.append(np.full(n, limit_weight))
        rows.append(np.full(n, rest_weight))
        if use_base:
            rows.append(np.full(3, base_reg_weight))
        self.weight = np.concatenate(rows)
        self.residual_dim = self.weight.size
        self.tangent_dim = n + (3 if use_base else 0)

    def _compose_base(self, fq, fp, base_angle, base_xy):
        if not self.use_base:
            return fq, fp
        half = 0.5 * base_angle
        bq = np.zeros(base_angle.shape + (4,))
        bq[..., 0] = np.cos(half)
        bq[..., 3] = np.sin(half)
        bp = np.concatenate([base_xy, np.zeros(base_angle.shape + (1,))], axis=-1)
        return quat_mul(bq, fq), quat_rotate(bq, fp) + bp

    def residuals(self, q, base_angle=None, base_xy=None, fk=None):
        """Weighted residual stack, shape (B, M)."""
        quat, pos, _, _ = fk if fk is not None else fk_arrays(self.model, q)
        fq, fp = quat[..., self.link_idx, :], pos[..., self.link_idx, :]
        cq, cp = self._compose_base(fq, fp, base_angle, base_xy)
        e_q = quat_mul(np.broadcast_to(self.ti_q, cq.shape), cq)
        e_t = self.ti_t + quat_rotate(np.broadcast_to(self.ti_q, cq.shape), cp)
        pose = se3_log_arrays(e_q, e_t)
        limit = np.maximum(0.0, q - self.model.upper_limits) + np.maximum(
            0.0, self.model.lower_limits - q
        )
        rest = q - self.rest_pose
        parts = [pose, limit, rest]
        if self.use_base:
            parts.append(
                np.concatenate([base_xy, base_angle[..., None]], axis=-1)
            )
        return np.concatenate(parts, axis=-1) * self.weight

    def residuals_and_jacobian(self, q, base_angle=None, base_xy=None):
        """Weighted residuals (B, M) and Jacobian (B, M, D) from one FK pass."""
        fk = fk_arrays(self.model, q)
        quat, pos, joint_pos, joint_axis = fk
        r = self.residuals(q, base_angle, base_xy, fk=fk)

        batch = q.shape[:-1]
        n = self.model.actuated_count
        fq, fp = quat[..., self.link_idx, :], pos[..., self.link_idx, :]
        j_geom = _point_jacobian_impl(
            self.model, fp, joint_pos, joint_axis, self.link_idx, rotational=True
        )
        r_fk_t = np.swapaxes(quat_to_matrix(fq), -1, -2)
        body = np.concatenate([r_fk_t @ j_geom[..., :3, :], r_fk_t @ j_geom[..., 3:, :]], axis=-2)
        # residual twist of the composed pose feeds the log-map Jacobian
        cq, cp = self._compose_base(fq, fp, base_angle, base_xy)
        e_q = quat_mul(np.broadcast_to(self.ti_q, cq.shape), cq)
        e_t = self.ti_t + quat_rotate(np.broadcast_to(self.ti_q, cq.shape), cp)
        pose_res = se3_log_arrays(e_q, e_t)
        j_rinv = se3_right_jacobian_inv(pose_res)
        pose_block_q = j_rinv @ body

        jac = np.zeros(batch + (self.residual_dim, self.tangent_dim))
        jac[..., :6, :n] = pose_block_q
        rows = 6
        # limit subgradient: +1 above upper, -1 below lower, 0 at the boundary
        g = np.where(q > self.model.upper_limits, 1.0, 0.0) + np.where(
            q < self.model.lower_limits, -1.0, 0.0
        )
        idx = np.arange(n)
        jac[..., rows + idx, idx] = g
        rows += n
        jac[..., rows + idx, idx] = 1.0
        rows += n
        if self.use_base:
            fk_inv_q = quat_conj(fq)
            ad = se3_adjoint(fk_inv_q, -quat_rotate(fk_inv_q, fp))
            jac[..., :6, n:] = j_rinv @ ad @ _SE2_EMBED
            # base regularization rows are raw (x, y, angle); their derivative
            # with respect to a right-multiplicative SE(2) step is [[R(angle), 0], [0, 1]]
            cos_a, sin_a = np.cos(base_angle), np.sin(base_angle)
            jac[..., rows + 0, n + 0] = cos_a
            jac[..., rows + 0, n + 1] = -sin_a
            jac[..., rows + 1, n + 0] = sin_a
            jac[..., rows + 1, n + 1] = cos_a
            jac[..., rows + 2, n + 2] = 1.0
            rows += 3
        return r, jac * self.weight[:, None]

    def start_state(self, q0: np.ndarray) -> LaneState:
        q0 = np.asarray(q0, dtype=float)
        lanes = q0.shape[0]
        base_angle = np.zeros(lanes) if self.use_base else None
        base_xy = np.zeros((lanes, 2)) if self.use_base else None
        r = self.residuals(q0, base_angle, base_xy)
        cost = np.einsum("bm,bm->b", r, r)
        return LaneState(
            q=q0.copy(),
            base_angle=base_angle,
            base_xy=base_xy,
            damping=np.full(lanes, DAMPING_INIT),
            cost=cost,
            history=[cost.copy()],
        )

    def run(self, state: LaneState, steps: int) -> LaneState:
        """Advance every lane by `steps` LM proposals (accept/reject per lane)."""
        n = self.model.actuated_count
        for _ in range(steps):
            r, jac = self.residuals_and_jacobian(state.q, state.base_angle, state.base_xy)
            jtj = np.einsum("bmi,bmj->bij", jac, jac)
            grad = np.einsum("bmi,bm->bi", jac, r)
            diag = np.maximum(np.einsum("bii->bi", jtj), DIAG_CLAMP)
            h = jtj + state.damping[:, None, None] * diag[:, :, None] * np.eye(self.tangent_dim)
            try:
                delta = -np.linalg.solve(h, grad[..., None])[..., 0]
            except np.linalg.LinAlgError:
                # escalate damping on every lane and retry next step
                state.damping = np.minimum(state.damping * DAMPING_UP, DAMPING_MAX)
                state.history.append(state.cost.copy())
                continue

            q_new = state.q + delta[:, :n]
            if self.use_base:
                angle_step, xy_step = se2_exp_arrays(delta[:, n:])
                base_angle_new = wrap_angle(state.base_angle + angle_step)
                base_xy_new = state.base_xy + (
                    rot2(state.base_angle) @ xy_step[..., None]
                )[..., 0]
            else:
                base_angle_new, base_xy_new = None, None
            r_new = self.residuals(q_new, base_angle_new, base_xy_new)
            cost_new = np.einsum("bm,bm->b", r_new, r_new)
            cost_new = np.where(np.isfinite(cost_new), cost_new, np.inf)
            accept = cost_new < state.cost

            state.q = np.where(accept[:, None], q_new, state.q)
            if self.use_base:
                state.base_angle = np.where(accept, base_angle_new, state.base_angle)
                state.base_xy = np.where(accept[:, None], base_xy_new, state.base_xy)
            state.cost = np.where(accept, cost_new, state.cost)
            state.damping = np.where(
                accept,
                np.maximum(state.damping * DAMPING_DOWN, DAMPING_MIN),
                np.minimum(state.damping * DAMPING_UP, DAMPING_MAX),
            )
            state.history.append(state.cost.copy())
        return state
