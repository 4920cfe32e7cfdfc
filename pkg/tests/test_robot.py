"""URDF parsing, forward kinematics, and Jacobian consistency."""

import math

import numpy as np
import pytest

from kinoptik import robot as rb
from kinoptik.errors import UnsupportedFeatureError, UrdfError
from kinoptik.liegroups import Transform3

from conftest import fd_link_jacobian

MINIMAL_2LINK = """
<robot name="mini">
  <link name="base"/>
  <link name="arm"/>
  <joint name="hinge" type="revolute">
    <parent link="base"/><child link="arm"/>
    <origin xyz="0 0 0.5" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-1.0" upper="1.0" velocity="1.0"/>
  </joint>
</robot>
"""

MIMIC_PAIR = """
<robot name="mimic_pair">
  <link name="base"/>
  <link name="wheel_a"/>
  <link name="wheel_b"/>
  <joint name="drive" type="revolute">
    <parent link="base"/><child link="wheel_a"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.0" upper="3.0" velocity="1.0"/>
  </joint>
  <joint name="follower" type="revolute">
    <parent link="base"/><child link="wheel_b"/>
    <origin xyz="1 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.0" upper="3.0" velocity="1.0"/>
    <mimic joint="drive" multiplier="2" offset="0.1"/>
  </joint>
</robot>
"""


class TestParse:
    def test_minimal_two_link(self):
        model = rb.parse_urdf(MINIMAL_2LINK)
        assert model.actuated_count == 1
        assert model.link_names[0] == "base"
        assert model.actuated_joint_names == ["hinge"]

    def test_mimic_value_in_fk(self):
        model = rb.parse_urdf(MIMIC_PAIR)
        assert model.actuated_count == 1
        fk = rb.forward_kinematics(model, np.array([0.3]))
        b = fk[model.link_index("wheel_b")]
        # follower angle = 2 * 0.3 + 0.1
        assert abs(np.linalg.norm(b.rotation.log()) - 0.7) < 1e-12

    def test_seven_dof_arm_counts(self, arm7, arm7_gripper):
        assert arm7.actuated_count == 7
        # gripper adds one actuated finger; the second finger mimics it
        assert arm7_gripper.actuated_count == 8
        follower = arm7_gripper.joint("finger_joint_right")
        assert follower.mimic == ("finger_joint_left", 1.0, 0.0)

    def test_topological_order(self, arm7_gripper):
        seen = {arm7_gripper.root_link}
        for j in arm7_gripper.joints:
            assert j.parent_link in seen
            seen.add(j.child_link)

    def test_kinematic_loop_rejected(self):
        doc = MINIMAL_2LINK.replace(
            "</robot>",
            '<joint name="back" type="fixed"><parent link="arm"/><child link="base"/></joint></robot>',
        )
        with pytest.raises(UrdfError, match="back"):
            rb.parse_urdf(doc)

    def test_unsupported_joint_type(self):
        doc = MINIMAL_2LINK.replace('type="revolute"', 'type="floating"')
        with pytest.raises(UnsupportedFeatureError):
            rb.parse_urdf(doc)

    def test_missing_limits_rejected(self):
        doc = MINIMAL_2LINK.replace('<limit lower="-1.0" upper="1.0" velocity="1.0"/>', "")
        with pytest.raises(UrdfError, match="limits"):
            rb.parse_urdf(doc)

    def test_mimic_chain_rejected(self):
        doc = MIMIC_PAIR.replace(
            "</robot>",
            """<link name="wheel_c"/>
               <joint name="chained" type="revolute">
                 <parent link="base"/><child link="wheel_c"/>
                 <axis xyz="0 0 1"/><limit lower="-3" upper="3" velocity="1"/>
                 <mimic joint="follower"/>
               </joint></robot>""",
        )
        with pytest.raises(UrdfError, match="mimic chain"):
            rb.parse_urdf(doc)

    def test_continuous_joint_has_no_limits(self):
        doc = MINIMAL_2LINK.replace('type="revolute"', 'type="continuous"')
        model = rb.parse_urdf(doc)
        assert model.joints[0].limits is None
        assert not np.isfinite(model.lower_limits[0])

    def test_urdf_sphere_collision_geometry(self):
        doc = MINIMAL_2LINK.replace(
            '<link name="arm"/>',
            """<link name="arm">
                 <collision><origin xyz="0.1 0 0"/><geometry><sphere radius="0.05"/></geometry></collision>
                 <collision><geometry><box size="1 1 1"/></geometry></collision>
               </link>""",
        )
        model = rb.parse_urdf(doc)
        spheres = model.collision_spheres["arm"]
        assert len(spheres) == 1  # box ignored
        assert np.allclose(spheres[0].center, [0.1, 0, 0])
        assert spheres[0].radius == 0.05

    def test_sidecar_fixtures(self, arm7, planar_2r):
        assert np.allclose(arm7.rest_pose, [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785])
        assert arm7.collision_spheres["link4"][0].radius == 0.06
        # adjacent pairs excluded from the default self-collision list
        for a, b in planar_2r.self_collision_pairs:
            assert {a, b} != {"upper_arm", "forearm"}
        assert ("base", "forearm") in planar_2r.self_collision_pairs


class TestForwardKinematics:
    def test_single_joint_rest(self):
        model = rb.parse_urdf(MINIMAL_2LINK)
        fk = rb.forward_kinematics(model, np.zeros(1))
        arm = fk[model.link_index("arm")]
        assert np.allclose(arm.translation, [0, 0, 0.5])
        assert np.allclose(arm.rotation.wxyz, [1, 0, 0, 0])

    def test_planar_2r_reach(self, planar_2r):
        fk = rb.forward_kinematics(planar_2r, np.zeros(2))
        assert np.allclose(fk[planar_2r.link_index("ee")].translation, [2, 0, 0], atol=1e-12)

    def test_planar_2r_bent(self, planar_2r):
        # hand-computed: x = cos(q1) + cos(q1+q2), y = sin(q1) + sin(q1+q2)
        fk = rb.forward_kinematics(planar_2r, np.array([math.pi / 2, math.pi / 2]))
        assert np.allclose(
            fk[planar_2r.link_index("ee")].translation, [-1, 1, 0], atol=1e-12
        )

    def test_determinism(self, arm7):
        q = np.array([0.2, -0.5, 0.8, -1.5, 0.3, 1.2, -0.4])
        a = rb.fk_arrays(arm7, q)
        b = rb.fk_arrays(arm7, q)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_batched_fk_matches_scalar(self, arm7):
        rng = np.random.default_rng(1)
        qs = np.stack([arm7.sample_configuration(rng) for _ in range(8)])
        quat_b, pos_b, _, _ = rb.fk_arrays(arm7, qs)
        for i in range(8):
            quat_s, pos_s, _, _ = rb.fk_arrays(arm7, qs[i])
            assert np.array_equal(quat_b[i], quat_s)
            assert np.array_equal(pos_b[i], pos_s)

    def test_wrong_length_rejected(self, arm7):
        with pytest.raises(ValueError, match="expected 7"):
            rb.forward_kinematics(arm7, np.zeros(5))


class TestLinkJacobian:
    def test_textbook_single_revolute(self):
        doc = """
        <robot name="one">
          <link name="base"/><link name="tip"/>
          <joint name="j" type="revolute">
            <parent link="base"/><child link="tip"/>
            <origin xyz="1 0 0"/>
            <axis xyz="0 0 1"/>
            <limit lower="-3" upper="3" velocity="1"/>
          </joint>
        </robot>
        """
        # joint at x=1 rotating about z; put the frame of interest at the
        # joint child directly but displace the joint origin so the lever is 1
        model = rb.parse_urdf(
            doc.replace('<origin xyz="1 0 0"/>', '<origin xyz="0 0 0"/>')
        )
        q = np.zeros(1)
        # move the measured frame 1m along x via a fixed child
        doc2 = """
        <robot name="one">
          <link name="base"/><link name="tip"/><link name="frame"/>
          <joint name="j" type="revolute">
            <parent link="base"/><child link="tip"/>
            <axis xyz="0 0 1"/>
            <limit lower="-3" upper="3" velocity="1"/>
          </joint>
          <joint name="f" type="fixed">
            <parent link="tip"/><child link="frame"/>
            <origin xyz="1 0 0"/>
          </joint>
        </robot>
        """
        model = rb.parse_urdf(doc2)
        jac = rb.link_jacobian(model, q, "frame")
        assert np.allclose(jac[:, 0], [0, 1, 0, 0, 0, 1], atol=1e-12)

    def test_fixed_chain_zero_jacobian(self):
        doc = """
        <robot name="static">
          <link name="base"/><link name="a"/><link name="b"/>
          <joint name="j1" type="fixed"><parent link="base"/><child link="a"/><origin xyz="0 0 1"/></joint>
          <joint name="j2" type="revolute">
            <parent link="base"/><child link="b"/>
            <axis xyz="0 0 1"/><limit lower="-1" upper="1" velocity="1"/>
          </joint>
        </robot>
        """
        model = rb.parse_urdf(doc)
        jac = rb.link_jacobian(model, np.zeros(1), "a")
        assert np.allclose(jac, 0.0)

    @pytest.mark.parametrize("fixture", ["planar_2r", "arm7", "arm7_gripper"])
    def test_matches_finite_differences_100_configs(self, fixture, request):
        model = request.getfixturevalue(fixture)
        link = model.link_names[-1]
        rng = np.random.default_rng(123)
        for _ in range(100):
            q = model.sample_configuration(rng)
            analytical = rb.link_jacobian(model, q, link)
            numeric = fd_link_jacobian(model, q, link)
            assert np.max(np.abs(analytical - numeric)) < 1e-5

    def test_velocity_composition(self, arm7):
        # || log(FK(q + eps dq)^-1 FK(q)) + eps * J_body dq || = O(eps^2)
        from kinoptik.liegroups import quat_to_matrix, se3_log_arrays, quat_mul, quat_conj, quat_rotate

        rng = np.random.default_rng(5)
        idx = arm7.link_index("flange")
        for _ in range(20):
            q = arm7.sample_configuration(rng)
            dq = rng.normal(size=7)
            jac = rb.link_jacobian(arm7, q, "flange")
            quat, pos, _, _ = rb.fk_arrays(arm7, q)
            r = quat_to_matrix(quat[idx])
            body_jac = np.vstack([r.T @ jac[:3], r.T @ jac[3:]])
            errs = []
            for eps in (1e-3, 1e-4):
                qp, pp, _, _ = rb.fk_arrays(arm7, q + eps * dq)
                rel_q = quat_mul(quat_conj(qp[idx]), quat[idx])
                rel_t = quat_rotate(quat_conj(qp[idx]), pos[idx] - pp[idx])
                twist = se3_log_arrays(rel_q, rel_t)
                errs.append(np.linalg.norm(twist + eps * body_jac @ dq) / eps**2)
            assert errs[0] < 50.0 and errs[1] < 50.0

    def test_unknown_link(self, arm7):
        with pytest.raises(ValueError, match="unknown link"):
            rb.link_jacobian(arm7, np.zeros(7), "nope")


class TestJacobianDerivative:
    @pytest.mark.parametrize("fixture", ["planar_2r", "arm7_gripper"])
    def test_matches_finite_differences(self, fixture, request):
        model = request.getfixturevalue(fixture)
        link = model.link_names[-1]
        rng = np.random.default_rng(77)
        eps = 1e-6
        n = model.actuated_count
        for _ in range(20):
            q = model.sample_configuration(rng)
            _, djac = rb.translational_jacobian_with_derivative(model, q, link)
            for a in range(n):
                d = np.zeros(n)
                d[a] = eps
                jp, _ = rb.translational_jacobian_with_derivative(model, q + d, link)
                jm, _ = rb.translational_jacobian_with_derivative(model, q - d, link)
                assert np.max(np.abs((jp - jm) / (2 * eps) - djac[a])) < 1e-5
