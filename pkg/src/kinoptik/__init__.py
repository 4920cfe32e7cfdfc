"""kinoptik: kinematic optimization as weighted nonlinear least squares.

Robot-motion problems (inverse kinematics, trajectory optimization) are
expressed as typed variables plus composable weighted residuals and solved
with a block-sparse Levenberg-Marquardt optimizer.
"""

from .collision import Capsule, HalfSpace, Sphere, WorldModel, activation, signed_distance, swept_capsules
from .costs import (
    CostWeights,
    acceleration_cost,
    jerk_cost,
    limit_cost,
    manipulability_cost,
    pose_cost,
    rest_cost,
    self_collision_cost,
    smoothness_cost,
    velocity_limit_cost,
    world_collision_cost,
)
from .errors import CostEvaluationError, KinoptikError, PlanningError, UnsupportedFeatureError, UrdfError
from .liegroups import (
    Rotation3,
    Transform2,
    Transform3,
    compose,
    interpolate,
    inverse,
    local_update,
    se3_exp,
    se3_log,
    so3_exp,
    so3_log,
)
from .robot import RobotModel, forward_kinematics, link_jacobian, link_transform, load_robot, parse_urdf
from .solver import CostTerm, Problem, SolveOptions, SolveReport, VariableSet, assemble, numeric_jacobian, solve, solve_batch
from .tasks import IkRequest, IkResult, TrajRequest, TrajResult, plan_trajectory, solve_ik_beam, solve_ik_mobile

__version__ = "0.1.0"
