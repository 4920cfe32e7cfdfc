import os

import numpy as np
import pytest

from kinoptik.robot import load_robot

ROBOTS = os.path.join(os.path.dirname(__file__), "..", "src", "kinoptik", "robots")


def robot_path(name: str) -> str:
    return os.path.join(ROBOTS, name)


@pytest.fixture(scope="session")
def planar_2r():
    return load_robot(robot_path("planar_2r.urdf"), robot_path("planar_2r.sidecar.json"))


@pytest.fixture(scope="session")
def arm7():
    return load_robot(robot_path("arm7.urdf"), robot_path("arm7.sidecar.json"))


@pytest.fixture(scope="session")
def arm7_gripper():
    return load_robot(robot_path("arm7_gripper.urdf"))


def fd_link_jacobian(model, q, link, eps=1e-6):
    """Independent finite-difference oracle for the geometric link Jacobian."""
    from kinoptik.robot import forward_kinematics

    idx = model.link_index(link)
    jac = np.zeros((6, model.actuated_count))
    for k in range(model.actuated_count):
        d = np.zeros(model.actuated_count)
        d[k] = eps
        fp = forward_kinematics(model, q + d)[idx]
        fm = forward_kinematics(model, q - d)[idx]
        jac[:3, k] = (fp.translation - fm.translation) / (2 * eps)
        jac[3:, k] = fp.rotation.compose(fm.rotation.inverse()).log() / (2 * eps)
    return jac
