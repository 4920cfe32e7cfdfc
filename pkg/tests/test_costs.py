"""Residual definitions and the analytic-vs-numeric Jacobian cross-check."""

import math

import numpy as np
import pytest

from kinoptik import collision as col
from kinoptik import costs as ck
from kinoptik.liegroups import Rotation3, Transform2, Transform3
from kinoptik.robot import forward_kinematics, link_transform
from kinoptik.solver import VariableSet, numeric_jacobian


def check_jacobian(cost, values, tol=1e-5):
    analytic = cost.jacobian(*values)
    numeric = numeric_jacobian(cost, values)
    for a, n in zip(analytic, numeric):
        assert np.max(np.abs(np.asarray(a) - n)) < tol


class TestCostWeights:
    def test_defaults_nonnegative_and_json_roundtrip(self):
        w = ck.CostWeights()
        data = w.to_json()
        assert set(data) == set(ck.CostWeights.names())
        back = ck.CostWeights.from_json(data)
        assert back == w

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ck.CostWeights(limit=-1.0)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            ck.CostWeights.from_json({"bogus": 1.0})


class TestPoseCost:
    def test_zero_at_target(self, arm7):
        q = arm7.rest_pose
        target = link_transform(arm7, q, "flange")
        cost = ck.pose_cost(arm7, "q", "flange", target)
        assert np.max(np.abs(cost.evaluator(q))) < 1e-12

    def test_small_translation_limit(self, arm7):
        q = arm7.rest_pose
        current = link_transform(arm7, q, "flange")
        target = Transform3(current.rotation, current.translation - np.array([0.001, 0, 0]))
        r = ck.pose_cost(arm7, "q", "flange", target).evaluator(q)
        # target frame differs from current by ~1mm along its own x-ish axis;
        # the twist translation norm matches the displacement to first order
        assert abs(np.linalg.norm(r[:3]) - 0.001) < 1e-6
        assert np.linalg.norm(r[3:]) < 1e-9

    def test_unknown_link(self, arm7):
        with pytest.raises(ValueError, match="unknown link"):
            ck.pose_cost(arm7, "q", "nope", Transform3.identity())

    def test_weight_rows(self, arm7):
        cost = ck.pose_cost(
            arm7, "q", "flange", Transform3.identity(), position_weight=7.0, orientation_weight=3.0
        )
        assert np.allclose(cost.weight, [7, 7, 7, 3, 3, 3])

    def test_mobile_base_reduces_error(self, arm7):
        # base two meters away: composed pose with the matching base is exact
        q = arm7.rest_pose
        base = Transform2(0.4, np.array([2.0, -1.0]))
        target = base.to_transform3().compose(link_transform(arm7, q, "flange"))
        cost = ck.pose_cost(arm7, "q", "flange", target, base_var="base")
        assert np.max(np.abs(cost.evaluator(q, base))) < 1e-12
        assert np.linalg.norm(cost.evaluator(q, Transform2.identity())) > 1.0


class TestJointSpaceCosts:
    def test_limit_inside_zero(self, arm7):
        cost = ck.limit_cost(arm7, "q")
        assert np.allclose(cost.evaluator(arm7.rest_pose), 0.0)

    def test_limit_above_upper(self, arm7):
        cost = ck.limit_cost(arm7, "q")
        q = arm7.rest_pose.copy()
        q[0] = arm7.upper_limits[0] + 0.2
        r = cost.evaluator(q)
        assert r[0] == pytest.approx(0.2)
        assert np.allclose(r[1:], 0.0)

    def test_limit_subgradient_zero_at_boundary(self, arm7):
        cost = ck.limit_cost(arm7, "q")
        q = arm7.rest_pose.copy()
        q[2] = arm7.upper_limits[2]
        jac = cost.jacobian(q)[0]
        assert jac[2, 2] == 0.0

    def test_continuous_joint_skipped(self):
        from kinoptik.robot import parse_urdf

        doc = """
        <robot name="spinner"><link name="a"/><link name="b"/>
          <joint name="j" type="continuous">
            <parent link="a"/><child link="b"/><axis xyz="0 0 1"/>
          </joint>
        </robot>"""
        model = parse_urdf(doc)
        cost = ck.limit_cost(model, "q")
        assert cost.evaluator(np.array([100.0]))[0] == 0.0

    def test_velocity_boundary_and_double(self, arm7):
        dt = 0.1
        cost = ck.velocity_limit_cost(arm7, "a", "b", dt)
        q = arm7.rest_pose
        assert np.allclose(cost.evaluator(q, q), 0.0)
        budget = arm7.velocity_limits * dt
        at_limit = q + budget
        assert np.allclose(cost.evaluator(q, at_limit), 0.0)
        # displacement of 2x the budget leaves exactly one budget of excess
        r = cost.evaluator(q, q + 2 * budget)
        assert np.allclose(r, budget)

    def test_velocity_direct_variant(self, arm7):
        cost = ck.velocity_limit_cost_direct(arm7, "qd")
        qd = np.zeros(7)
        qd[3] = arm7.velocity_limits[3] + 0.5
        r = cost.evaluator(qd)
        assert r[3] == pytest.approx(0.5)

    def test_rest(self, arm7):
        cost = ck.rest_cost("q", arm7.rest_pose)
        assert np.allclose(cost.evaluator(arm7.rest_pose), 0.0)
        e2 = np.zeros(7)
        e2[2] = 1.0
        assert np.allclose(cost.evaluator(arm7.rest_pose + e2), e2)
        assert np.allclose(cost.jacobian(arm7.rest_pose)[0], np.eye(7))

    def test_smoothness(self, arm7):
        cost = ck.smoothness_cost(arm7, "a", "b")
        q = arm7.rest_pose
        assert np.allclose(cost.evaluator(q, q), 0.0)
        blocks = cost.jacobian(q, q)
        assert np.allclose(blocks[0], -np.eye(7))
        assert np.allclose(blocks[1], np.eye(7))


class TestStencilCosts:
    def test_constant_trajectory_zero(self, arm7):
        q = arm7.rest_pose
        qs = [q] * 5
        acc = ck.acceleration_cost(arm7, list("abcde"), dt=0.1)
        jrk = ck.jerk_cost(arm7, list("abcde"), dt=0.1)
        assert np.allclose(acc.evaluator(*qs), 0.0)
        assert np.allclose(jrk.evaluator(*qs), 0.0)

    def test_linear_trajectory_zero_acceleration(self, arm7):
        dt = 0.1
        slope = np.linspace(-1.0, 1.0, 7)
        qs = [arm7.rest_pose + k * dt * slope for k in range(-2, 3)]
        acc = ck.acceleration_cost(arm7, list("abcde"), dt=dt)
        assert np.max(np.abs(acc.evaluator(*qs))) < 1e-10

    def test_cubic_jerk_exact(self, arm7):
        # q(t) = t^3 per joint sampled at dt = 0.1: third derivative is 6
        dt = 0.1
        qs = [np.full(7, ((k - 2) * dt) ** 3) for k in range(5)]
        jrk = ck.jerk_cost(arm7, list("abcde"), dt=dt)
        assert np.max(np.abs(jrk.evaluator(*qs) - 6.0)) < 1e-6

    def test_quadratic_acceleration_exact(self, arm7):
        dt = 0.05
        qs = [np.full(7, 0.5 * 3.0 * ((k - 2) * dt) ** 2) for k in range(5)]
        acc = ck.acceleration_cost(arm7, list("abcde"), dt=dt)
        assert np.max(np.abs(acc.evaluator(*qs) - 3.0)) < 1e-8

    def test_wrong_var_count(self, arm7):
        with pytest.raises(ValueError, match="5 consecutive"):
            ck.acceleration_cost(arm7, ["a", "b"], dt=0.1)


class TestManipulability:
    def test_extended_2r_singular(self, planar_2r):
        cost = ck.manipulability_cost(planar_2r, "q", "ee")
        r = cost.evaluator(np.zeros(2))
        assert r[0] == pytest.approx(1e6)
        assert np.all(np.isfinite(cost.jacobian(np.zeros(2))[0]))

    def test_2r_right_angle_unit_measure(self, planar_2r):
        # at q = (0, pi/2) the 2x2 position Jacobian has |det| = 1
        cost = ck.manipulability_cost(planar_2r, "q", "ee")
        r = cost.evaluator(np.array([0.0, math.pi / 2]))
        assert r[0] == pytest.approx(1.0 / (1.0 + 1e-6), rel=1e-9)

    def test_positive_everywhere(self, arm7):
        rng = np.random.default_rng(40)
        cost = ck.manipulability_cost(arm7, "q", "flange")
        for _ in range(20):
            assert cost.evaluator(arm7.sample_configuration(rng))[0] > 0.0


def demo_world():
    return col.WorldModel(
        [
            col.Sphere([0.45, 0.1, 0.55], 0.12),
            col.Capsule([-0.5, -0.4, 0.2], [-0.5, 0.4, 0.6], 0.1),
            col.HalfSpace([0.0, 0.0, 1.0], -0.3),
        ]
    )


class TestCollisionCosts:
    def test_far_from_obstacles_zero(self, arm7):
        world = col.WorldModel([col.Sphere([5.0, 5.0, 5.0], 0.2)])
        cost = ck.world_collision_cost(arm7, "q", world)
        assert np.allclose(cost.evaluator(arm7.rest_pose), 0.0)

    def test_single_pair_activation_value(self):
        # one sphere r=0.1 at the flange of a trivial robot, obstacle 0.15 away
        from kinoptik.robot import parse_urdf

        doc = """
        <robot name="stick"><link name="base"/><link name="tip"/>
          <joint name="j" type="prismatic">
            <parent link="base"/><child link="tip"/><axis xyz="1 0 0"/>
            <limit lower="-1" upper="1" velocity="1"/>
          </joint>
        </robot>"""
        model = parse_urdf(
            doc, collision_spheres={"tip": [{"center": [0, 0, 0], "radius": 0.1}]}
        )
        world = col.WorldModel([col.Sphere([0.35, 0.0, 0.0], 0.1)])
        cost = ck.world_collision_cost(model, "q", world, eta=0.1)
        # at q 0.2 the centers are 0.15 apart: d = -0.05, activation = 0.05 + 0.5*0.1
        r = cost.evaluator(np.array([0.2]))
        assert r[0] == pytest.approx(0.05 + 0.05, abs=1e-9)

    def test_gradient_pushes_away_from_obstacle(self, arm7):
        # penetrating flange sphere: moving along -gradient increases distance
        q = arm7.rest_pose
        flange = link_transform(arm7, q, "flange")
        world = col.WorldModel([col.Sphere(flange.apply([0.0, 0.0, 0.035]), 0.06)])
        cost = ck.world_collision_cost(arm7, "q", world, eta=0.05, hard_min=True)
        rows = cost.evaluator(q)
        assert rows.max() > 0.0
        grad = cost.jacobian(q)[0].sum(axis=0)
        step = -1e-3 * grad / np.linalg.norm(grad)
        assert cost.evaluator(q + step).sum() < rows.sum()

    def test_rows_nonnegative(self, arm7):
        rng = np.random.default_rng(41)
        wc = ck.world_collision_cost(arm7, "q", demo_world())
        sc = ck.self_collision_cost(arm7, "q")
        for _ in range(20):
            q = arm7.sample_configuration(rng)
            assert np.all(wc.evaluator(q) >= 0.0)
            assert np.all(sc.evaluator(q) >= 0.0)

    def test_rest_pose_self_collision_free(self, arm7, planar_2r):
        for model in (arm7, planar_2r):
            cost = ck.self_collision_cost(model, "q", eta=0.01)
            assert np.allclose(cost.evaluator(model.rest_pose), 0.0)

    def test_swept_catches_midpath(self, planar_2r):
        # swing the arm through an obstacle that both endpoint configs miss
        q0 = np.array([0.6, 0.0])
        q1 = np.array([-0.6, 0.0])
        ee0 = forward_kinematics(planar_2r, q0)[planar_2r.link_index("ee")].translation
        ee1 = forward_kinematics(planar_2r, q1)[planar_2r.link_index("ee")].translation
        mid = 0.5 * (ee0 + ee1)
        world = col.WorldModel([col.Sphere(mid, 0.1)])
        static = ck.world_collision_cost(planar_2r, "q", world, eta=0.01)
        swept = ck.swept_collision_cost(planar_2r, "a", "b", world, eta=0.01)
        assert np.allclose(static.evaluator(q0), 0.0)
        assert np.allclose(static.evaluator(q1), 0.0)
        assert swept.evaluator(q0, q1).max() > 0.0


class TestJacobianCrossChecks:
    """Spot checks per family; the exhaustive 100-config gate lives in acceptance."""

    def test_pose(self, arm7):
        rng = np.random.default_rng(50)
        target = link_transform(arm7, arm7.sample_configuration(rng), "flange")
        cost = ck.pose_cost(arm7, "q", "flange", target)
        for _ in range(10):
            check_jacobian(cost, [arm7.sample_configuration(rng)])

    def test_pose_with_se2_base(self, arm7):
        rng = np.random.default_rng(51)
        target = link_transform(arm7, arm7.sample_configuration(rng), "flange")
        cost = ck.pose_cost(arm7, "q", "flange", target, base_var="base")
        for _ in range(10):
            base = Transform2(rng.uniform(-2, 2), rng.normal(size=2))
            check_jacobian(cost, [arm7.sample_configuration(rng), base])

    def test_pose_with_se3_base(self, arm7):
        rng = np.random.default_rng(52)
        target = link_transform(arm7, arm7.sample_configuration(rng), "flange")
        cost = ck.pose_cost(arm7, "q", "flange", target, base_var="base")
        for _ in range(5):
            base = Transform3(Rotation3.exp(rng.normal(size=3) * 0.5), rng.normal(size=3))
            check_jacobian(cost, [arm7.sample_configuration(rng), base])

    def test_limit_velocity_rest_smoothness(self, arm7):
        rng = np.random.default_rng(53)
        span = arm7.upper_limits - arm7.lower_limits
        limit = ck.limit_cost(arm7, "q")
        vel = ck.velocity_limit_cost(arm7, "a", "b", dt=0.1)
        rest = ck.rest_cost("q", arm7.rest_pose)
        smooth = ck.smoothness_cost(arm7, "a", "b")
        for _ in range(10):
            # enlarged box so limit rows activate
            q = rng.uniform(arm7.lower_limits - 0.5 * span, arm7.upper_limits + 0.5 * span)
            q2 = arm7.sample_configuration(rng)
            check_jacobian(limit, [q])
            check_jacobian(vel, [q, q2])
            check_jacobian(rest, [q])
            check_jacobian(smooth, [q, q2])

    def test_stencils(self, arm7):
        rng = np.random.default_rng(54)
        acc = ck.acceleration_cost(arm7, list("abcde"), dt=0.07)
        jrk = ck.jerk_cost(arm7, list("abcde"), dt=0.07)
        qs = [arm7.sample_configuration(rng) for _ in range(5)]
        check_jacobian(acc, qs)
        check_jacobian(jrk, qs)

    def test_manipulability(self, arm7):
        rng = np.random.default_rng(55)
        cost = ck.manipulability_cost(arm7, "q", "flange")
        done = 0
        while done < 10:
            q = arm7.sample_configuration(rng)
            # finite differences lose validity near singularities (1/m blowup)
            if cost.evaluator(q)[0] > 20.0:
                continue
            check_jacobian(cost, [q])
            done += 1

    def test_collision_families(self, arm7):
        rng = np.random.default_rng(56)
        world = demo_world()
        wc = ck.world_collision_cost(arm7, "q", world, eta=0.08)
        sc = ck.self_collision_cost(arm7, "q", eta=0.05)
        sw = ck.swept_collision_cost(arm7, "a", "b", world, eta=0.08)
        for _ in range(8):
            q = arm7.sample_configuration(rng)
            q2 = arm7.sample_configuration(rng)
            check_jacobian(wc, [q])
            check_jacobian(sc, [q])
            check_jacobian(sw, [q, q2])
