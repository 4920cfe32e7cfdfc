"""URDF kinematic trees: parsing, forward kinematics, manipulator Jacobians.

The parser covers the subset needed for kinematic optimization: fixed,
revolute, continuous, and prismatic joints, mimic couplings, joint and
velocity limits, and sphere collision geometry. Everything else in the URDF
is ignored; masses, inertias, meshes, and SRDF are out of scope.

Configurations ``q`` are plain float arrays over the actuated (non-fixed,
non-mimic) joints in topological order. All kinematics functions broadcast
over leading batch dimensions of ``q`` and are pure: a parsed ``RobotModel``
is never mutated, so concurrent use is safe.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .collision import Sphere
from .errors import UnsupportedFeatureError, UrdfError
from .liegroups import Rotation3, Transform3, quat_mul, quat_rotate

KIND_FIXED = 0
KIND_REVOLUTE = 1
KIND_PRISMATIC = 2

_KIND_CODES = {
    "fixed": KIND_FIXED,
    "revolute": KIND_REVOLUTE,
    "continuous": KIND_REVOLUTE,
    "prismatic": KIND_PRISMATIC,
}


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str  # fixed | revolute | continuous | prismatic
    parent_link: str
    child_link: str
    origin: Transform3
    axis: np.ndarray
    limits: tuple[float, float] | None = None
    velocity_limit: float | None = None
    mimic: tuple[str, float, float] | None = None  # (source joint, multiplier, offset)


class RobotModel:
    """Immutable kinematic tree with precomputed tables for fast FK/Jacobians."""

    def __init__(
        self,
        link_names: list[str],
        joints: list[Joint],
        collision_spheres: dict[str, list[Sphere]] | None = None,
        self_collision_ignore: list[tuple[str, str]] | None = None,
        rest_pose: np.ndarray | None = None,
    ):
        self.link_names = list(link_names)
        self.joints = list(joints)
        self._link_index = {name: i for i, name in enumerate(self.link_names)}
        self.collision_spheres = {k: list(v) for k, v in (collision_spheres or {}).items()}

        self.actuated_joint_names = [
            j.name for j in self.joints if j.kind != "fixed" and j.mimic is None
        ]
        self.actuated_count = len(self.actuated_joint_names)
        qcol_of = {name: i for i, name in enumerate(self.actuated_joint_names)}

        nj = len(self.joints)
        self._parent_link = np.empty(nj, dtype=int)
        self._child_link = np.empty(nj, dtype=int)
        self._origin_quat = np.empty((nj, 4))
        self._origin_pos = np.empty((nj, 3))
        self._axis = np.empty((nj, 3))
        self._kind_code = np.empty(nj, dtype=int)
        self._qcol = np.full(nj, -1, dtype=int)
        self._mult = np.ones(nj)
        self._offset = np.zeros(nj)
        for j_idx, j in enumerate(self.joints):
            self._parent_link[j_idx] = self._link_index[j.parent_link]
            self._child_link[j_idx] = self._link_index[j.child_link]
            self._origin_quat[j_idx] = j.origin.rotation.wxyz
            self._origin_pos[j_idx] = j.origin.translation
            self._axis[j_idx] = j.axis
            self._kind_code[j_idx] = _KIND_CODES[j.kind]
            if j.kind == "fixed":
                continue
            if j.mimic is not None:
                source, mult, offset = j.mimic
                self._qcol[j_idx] = qcol_of[source]
                self._mult[j_idx] = mult
                self._offset[j_idx] = offset
            else:
                self._qcol[j_idx] = qcol_of[j.name]

        # parent joint of each link (-1 for the root)
        self._parent_joint = np.full(len(self.link_names), -1, dtype=int)
        for j_idx in range(nj):
            self._parent_joint[self._child_link[j_idx]] = j_idx

        # ancestors[l, j]: joint j lies on the path from the root to link l
        self._ancestors = np.zeros((len(self.link_names), nj), dtype=bool)
        for l_idx in range(len(self.link_names)):
            j_idx = self._parent_joint[l_idx]
            while j_idx >= 0:
                self._ancestors[l_idx, j_idx] = True
                j_idx = self._parent_joint[self._parent_link[j_idx]]

        # per-actuated-joint limit arrays (inf where absent)
        n = self.actuated_count
        self.lower_limits = np.full(n, -np.inf)
        self.upper_limits = np.full(n, np.inf)
        self.velocity_limits = np.full(n, np.inf)
        for j in self.joints:
            if j.mimic is not None or j.kind == "fixed":
                continue
            col = qcol_of[j.name]
            if j.limits is not None:
                self.lower_limits[col], self.upper_limits[col] = j.limits
            if j.velocity_limit is not None:
                self.velocity_limits[col] = j.velocity_limit

        if rest_pose is not None:
            rest = np.asarray(rest_pose, dtype=float).reshape(-1)
            if rest.size != n:
                raise UrdfError(
                    f"rest_pose has {rest.size} values, expected {n} actuated joints"
                )
            self.rest_pose = rest
        else:
            # limit midpoints; unbounded (continuous) joints rest at zero
            rest = np.zeros(n)
            for i in range(n):
                if np.isfinite(self.lower_limits[i]) and np.isfinite(self.upper_limits[i]):
                    rest[i] = 0.5 * (self.lower_limits[i] + self.upper_limits[i])
            self.rest_pose = rest

        pairs = self_collision_pairs_default(self, self_collision_ignore or [])
        self.self_collision_pairs = pairs

    # -- lookup helpers -----------------------------------------------------

    def link_index(self, name: str) -> int:
        try:
            return self._link_index[name]
        except KeyError:
            raise ValueError(f"unknown link '{name}'") from None

    def joint(self, name: str) -> Joint:
        for j in self.joints:
            if j.name == name:
                return j
        raise ValueError(f"unknown joint '{name}'")

    @property
    def root_link(self) -> str:
        return self.link_names[0]

    def sample_configuration(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw inside joint limits; continuous joints in (-pi, pi]."""
        lo = np.where(np.isfinite(self.lower_limits), self.lower_limits, -math.pi)
        hi = np.where(np.isfinite(self.upper_limits), self.upper_limits, math.pi)
        return rng.uniform(lo, hi)

    def clip_configuration(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower_limits, self.upper_limits)


def self_collision_pairs_default(
    model: RobotModel, ignore: list[tuple[str, str]]
) -> list[tuple[str, str]]:
    """All sphere-bearing link pairs minus adjacent (parent, child) pairs and ignores."""
    adjacent = set()
    for j in model.joints:
        adjacent.add(frozenset((j.parent_link, j.child_link)))
    ignored = {frozenset(p) for p in ignore}
    named = [l for l in model.link_names if model.collision_spheres.get(l)]
    pairs = []
    for i, a in enumerate(named):
        for b in named[i + 1 :]:
            key = frozenset((a, b))
            if key in adjacent or key in ignored:
                continue
            pairs.append((a, b))
    return pairs


# ---------------------------------------------------------------------------
# URDF parsing
# ---------------------------------------------------------------------------


def _parse_origin(elem) -> Transform3:
    if elem is None:
        return Transform3.identity()
    xyz = np.fromstring(elem.get("xyz", "0 0 0"), sep=" ")
    rpy = np.fromstring(elem.get("rpy", "0 0 0"), sep=" ")
    roll = Rotation3.exp(np.array([rpy[0], 0.0, 0.0]))
    pitch = Rotation3.exp(np.array([0.0, rpy[1], 0.0]))
    yaw = Rotation3.exp(np.array([0.0, 0.0, rpy[2]]))
    return Transform3(yaw.compose(pitch).compose(roll), xyz)


def _parse_collision_spheres(link_elem) -> list[Sphere]:
    spheres = []
    for coll in link_elem.findall("collision"):
        sphere = coll.find("geometry/sphere")
        if sphere is None:
            continue  # only sphere geometry participates in collision checks
        origin = coll.find("origin")
        center = np.fromstring(origin.get("xyz", "0 0 0"), sep=" ") if origin is not None else np.zeros(3)
        spheres.append(Sphere(center, float(sphere.get("radius"))))
    return spheres


def parse_urdf(
    document: str,
    collision_spheres: dict | None = None,
    self_collision_ignore: list | None = None,
    rest_pose=None,
) -> RobotModel:
    """Parse a URDF document into a RobotModel.

    Raises UrdfError for kinematic loops, missing limits on revolute/prismatic
    joints, and mimic chains; UnsupportedFeatureError for planar/floating joints.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise UrdfError(f"malformed URDF XML: {exc}") from exc
    if root.tag != "robot":
        raise UrdfError(f"expected <robot> root element, got <{root.tag}>")

    link_elems = root.findall("link")
    if not link_elems:
        raise UrdfError("URDF declares no links")
    link_names = [e.get("name") for e in link_elems]
    link_set = set(link_names)

    joints: list[Joint] = []
    for je in root.findall("joint"):
        name = je.get("name")
        kind = je.get("type")
        if kind in ("planar", "floating"):
            raise UnsupportedFeatureError(f"joint '{name}': unsupported type '{kind}'")
        if kind not in _KIND_CODES:
            raise UrdfError(f"joint '{name}': unknown type '{kind}'")
        parent = je.find("parent").get("link")
        child = je.find("child").get("link")
        if parent not in link_set or child not in link_set:
            raise UrdfError(f"joint '{name}' references undeclared link")
        axis_elem = je.find("axis")
        axis = (
            np.fromstring(axis_elem.get("xyz"), sep=" ")
            if axis_elem is not None
            else np.array([1.0, 0.0, 0.0])
        )
        norm = np.linalg.norm(axis)
        if kind != "fixed":
            if norm < 1e-12:
                raise UrdfError(f"joint '{name}': zero-length axis")
            axis = axis / norm

        limits = None
        velocity_limit = None
        limit_elem = je.find("limit")
        if limit_elem is not None:
            if limit_elem.get("velocity") is not None:
                velocity_limit = float(limit_elem.get("velocity"))
            if limit_elem.get("lower") is not None and limit_elem.get("upper") is not None:
                limits = (float(limit_elem.get("lower")), float(limit_elem.get("upper")))
        if kind in ("revolute", "prismatic") and limits is None:
            raise UrdfError(f"joint '{name}': revolute/prismatic joints require limits")
        if kind == "continuous":
            limits = None  # unbounded by definition

        mimic = None
        mimic_elem = je.find("mimic")
        if mimic_elem is not None:
            mimic = (
                mimic_elem.get("joint"),
                float(mimic_elem.get("multiplier", "1")),
                float(mimic_elem.get("offset", "0")),
            )

        joints.append(
            Joint(
                name=name,
                kind=kind,
                parent_link=parent,
                child_link=child,
                origin=_parse_origin(je.find("origin")),
                axis=axis,
                limits=limits,
                velocity_limit=velocity_limit,
                mimic=mimic,
            )
        )

    # tree structure: unique root, no link with two parents, no cycles
    parent_of: dict[str, Joint] = {}
    for j in joints:
        if j.child_link in parent_of:
            raise UrdfError(
                f"kinematic loop: joint '{j.name}' re-parents link '{j.child_link}'"
            )
        parent_of[j.child_link] = j
    roots = [l for l in link_names if l not in parent_of]
    if not roots:
        # every link has a parent, so some joint closes a cycle; walk up to find it
        seen: set[str] = set()
        link = link_names[0]
        while link not in seen:
            seen.add(link)
            link = parent_of[link].parent_link
        raise UrdfError(f"kinematic loop involving joint '{parent_of[link].name}'")
    if len(roots) != 1:
        raise UrdfError(f"expected a single root link, found {roots}")

    # topological order by BFS from the root
    children: dict[str, list[Joint]] = {}
    for j in joints:
        children.setdefault(j.parent_link, []).append(j)
    ordered_joints: list[Joint] = []
    ordered_links = [roots[0]]
    frontier = [roots[0]]
    while frontier:
        link = frontier.pop(0)
        for j in children.get(link, []):
            ordered_joints.append(j)
            ordered_links.append(j.child_link)
            frontier.append(j.child_link)
    if len(ordered_joints) != len(joints):
        unreachable = [j.name for j in joints if j not in ordered_joints]
        raise UrdfError(f"kinematic loop: joints {unreachable} are unreachable from the root")

    # mimic validation against the final joint set
    by_name = {j.name: j for j in joints}
    for j in joints:
        if j.mimic is None:
            continue
        source = by_name.get(j.mimic[0])
        if source is None:
            raise UrdfError(f"joint '{j.name}' mimics unknown joint '{j.mimic[0]}'")
        if source.mimic is not None:
            raise UrdfError(f"mimic chain: '{j.name}' mimics mimic joint '{source.name}'")
        if source.kind == "fixed":
            raise UrdfError(f"joint '{j.name}' mimics fixed joint '{source.name}'")

    spheres = {e.get("name"): _parse_collision_spheres(e) for e in link_elems}
    spheres = {k: v for k, v in spheres.items() if v}
    if collision_spheres:
        for link, entries in collision_spheres.items():
            if link not in link_set:
                raise UrdfError(f"collision_spheres references unknown link '{link}'")
            spheres[link] = [Sphere(e["center"], e["radius"]) for e in entries]

    return RobotModel(
        ordered_links,
        ordered_joints,
        collision_spheres=spheres,
        self_collision_ignore=[tuple(p) for p in (self_collision_ignore or [])],
        rest_pose=rest_pose,
    )


def load_robot(urdf_path: str, sidecar_path: str | None = None) -> RobotModel:
    """Load a URDF file plus the optional sidecar JSON with spheres/rest pose."""
    with open(urdf_path) as f:
        document = f.read()
    spheres = None
    ignore = None
    rest = None
    if sidecar_path is not None:
        with open(sidecar_path) as f:
            sidecar = json.load(f)
        spheres = sidecar.get("collision_spheres")
        ignore = sidecar.get("self_collision_ignore")
        rest = sidecar.get("rest_pose")
    return parse_urdf(
        document, collision_spheres=spheres, self_collision_ignore=ignore, rest_pose=rest
    )


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------


def _check_config(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != model.actuated_count:
        raise ValueError(
            f"configuration has {q.shape[-1]} values, expected {model.actuated_count}"
        )
    return q


def fk_arrays(model: RobotModel, q: np.ndarray):
    """Batched FK core.

    Returns (link_quat, link_pos, joint_pos, joint_axis_world) with shapes
    (..., L, 4), (..., L, 3), (..., J, 3), (..., J, 3). Joint data refers to
    the joint frame before motion is applied (the rotation axis anchor).
    """
    q = _check_config(model, q)
    batch = q.shape[:-1]
    nl, nj = len(model.link_names), len(model.joints)
    link_quat = np.empty(batch + (nl, 4))
    link_pos = np.empty(batch + (nl, 3))
    joint_pos = np.empty(batch + (nj, 3))
    joint_axis = np.empty(batch + (nj, 3))
    link_quat[..., 0, :] = np.array([1.0, 0.0, 0.0, 0.0])
    link_pos[..., 0, :] = 0.0

    for j in range(nj):
        pl = model._parent_link[j]
        cl = model._child_link[j]
        pq = link_quat[..., pl, :]
        pp = link_pos[..., pl, :]
        fq = quat_mul(pq, model._origin_quat[j])
        fp = pp + quat_rotate(pq, model._origin_pos[j])
        axis = model._axis[j]
        joint_pos[..., j, :] = fp
        joint_axis[..., j, :] = quat_rotate(fq, axis)

        kind = model._kind_code[j]
        if kind == KIND_FIXED:
            link_quat[..., cl, :] = fq
            link_pos[..., cl, :] = fp
            continue
        theta = q[..., model._qcol[j]] * model._mult[j] + model._offset[j]
        if kind == KIND_REVOLUTE:
            half = 0.5 * theta
            motion = np.empty(batch + (4,))
            motion[..., 0] = np.cos(half)
            motion[..., 1:] = np.sin(half)[..., None] * axis
            link_quat[..., cl, :] = quat_mul(fq, motion)
            link_pos[..., cl, :] = fp
        else:  # prismatic
            link_quat[..., cl, :] = fq
            link_pos[..., cl, :] = fp + theta[..., None] * joint_axis[..., j, :]
    return link_quat, link_pos, joint_pos, joint_axis


def forward_kinematics(model: RobotModel, q: np.ndarray) -> list[Transform3]:
    """World pose of every link at configuration q (root link at identity)."""
    quat, pos, _, _ = fk_arrays(model, _check_config(model, np.asarray(q, dtype=float)))
    return [Transform3.from_parts(quat[i], pos[i]) for i in range(len(model.link_names))]


def link_transform(model: RobotModel, q: np.ndarray, link: str) -> Transform3:
    quat, pos, _, _ = fk_arrays(model, q)
    idx = model.link_index(link)
    return Transform3.from_parts(quat[idx], pos[idx])


def link_jacobian(model: RobotModel, q: np.ndarray, link: str) -> np.ndarray:
    """Geometric Jacobian of a link frame, shape (..., 6, n).

    Rows 0-2: linear velocity of the link-frame origin in the base frame;
    rows 3-5: angular velocity in the base frame (matching the translation-first
    tangent ordering). Mimic joints fold into their source column.
    """
    _, pos, joint_pos, joint_axis = fk_arrays(model, q)
    idx = model.link_index(link)
    return _point_jacobian_impl(model, pos[..., idx, :], joint_pos, joint_axis, idx, rotational=True)


def point_jacobian(
    model: RobotModel, q: np.ndarray, link: str, point_world: np.ndarray
) -> np.ndarray:
    """Jacobian of a world-frame point rigidly attached to a link, shape (..., 3, n)."""
    _, _, joint_pos, joint_axis = fk_arrays(model, q)
    idx = model.link_index(link)
    return _point_jacobian_impl(
        model, np.asarray(point_world, dtype=float), joint_pos, joint_axis, idx, rotational=False
    )


def _point_jacobian_impl(model, point, joint_pos, joint_axis, link_idx, rotational):
    batch = joint_pos.shape[:-2]
    rows = 6 if rotational else 3
    jac = np.zeros(batch + (rows, model.actuated_count))
    for j in range(len(model.joints)):
        if not model._ancestors[link_idx, j]:
            continue
        kind = model._kind_code[j]
        if kind == KIND_FIXED:
            continue
        col = model._qcol[j]
        mult = model._mult[j]
        axis = joint_axis[..., j, :]
        if kind == KIND_REVOLUTE:
            lever = point - joint_pos[..., j, :]
            jac[..., :3, col] += mult * np.cross(axis, lever)
            if rotational:
                jac[..., 3:, col] += mult * axis
        else:  # prismatic
            jac[..., :3, col] += mult * axis
    return jac


def translational_jacobian_with_derivative(model: RobotModel, q: np.ndarray, link: str):
    """Translational Jacobian J (3, n) and its configuration derivative.

    Returns (J, dJ) with dJ[a] = dJ/dq_a, shape (n, 3, n). Unbatched; used by
    the manipulability cost. Derivatives follow from differentiating the
    geometric column formulas joint by joint, with mimic multipliers folded
    into both axes.
    """
    q = _check_config(model, np.asarray(q, dtype=float).reshape(-1))
    _, pos, joint_pos, joint_axis = fk_arrays(model, q)
    idx = model.link_index(link)
    p_e = pos[idx]
    n = model.actuated_count
    moving = [
        j
        for j in range(len(model.joints))
        if model._ancestors[idx, j] and model._kind_code[j] != KIND_FIXED
    ]

    # raw columns, one per moving joint on the path
    raw_cols = {}
    for j in moving:
        if model._kind_code[j] == KIND_REVOLUTE:
            raw_cols[j] = np.cross(joint_axis[j], p_e - joint_pos[j])
        else:
            raw_cols[j] = joint_axis[j].copy()

    def ancestor(s, i):
        # joint s strictly upstream of joint i's frame
        return model._ancestors[model._parent_link[i], s]

    jac = np.zeros((3, n))
    djac = np.zeros((n, 3, n))
    for i in moving:
        jac[:, model._qcol[i]] += model._mult[i] * raw_cols[i]
    for i in moving:
        rev_i = model._kind_code[i] == KIND_REVOLUTE
        for s in moving:
            if ancestor(s, i):
                if model._kind_code[s] == KIND_REVOLUTE:
                    w_s = joint_axis[s]
                    dw_i = np.cross(w_s, joint_axis[i])
                    dp_i = np.cross(w_s, joint_pos[i] - joint_pos[s])
                else:
                    dw_i = np.zeros(3)
                    dp_i = joint_axis[s]
                if rev_i:
                    d_col = np.cross(dw_i, p_e - joint_pos[i]) + np.cross(
                        joint_axis[i], raw_cols[s] - dp_i
                    )
                else:
                    d_col = dw_i
            else:
                # i at or upstream of s: only the endpoint moves with theta_s
                d_col = np.cross(joint_axis[i], raw_cols[s]) if rev_i else np.zeros(3)
            djac[model._qcol[s], :, model._qcol[i]] += (
                model._mult[i] * model._mult[s] * d_col
            )
    return jac, djac
