"""Exact geometry for SO(3), SE(3), and SE(2).

Conventions, fixed once and used everywhere:

- Quaternions are stored (w, x, y, z), unit norm, canonical sign w >= 0
  (at w == 0 the largest-magnitude vector component is made positive).
- Twists are plain 6-vectors ordered translation-first: (vx, vy, vz, wx, wy, wz).
  SE(2) tangents are (vx, vy, wz).
- Local parameterization is right-multiplicative: ``x (+) delta = x * exp(delta)``.

All array helpers broadcast over leading batch dimensions; the dataclasses
below wrap the unbatched case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this rotation angle (radians) exp/log/V-matrix switch to 2nd-order series.
SMALL_ANGLE = 1e-7

_TAU = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Quaternion array kernels
# ---------------------------------------------------------------------------


def quat_normalize_canonical(q: np.ndarray) -> np.ndarray:
    """Unit-normalize and resolve the double cover (w >= 0)."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    flip = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    zero_w = q[..., 0] == 0.0
    if np.any(zero_w):
        v = q[..., 1:]
        lead = np.take_along_axis(
            v, np.argmax(np.abs(v), axis=-1)[..., None], axis=-1
        )
        flip = np.where(zero_w[..., None], np.where(lead < 0.0, -1.0, 1.0), flip)
    return q * flip


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def quat_conj(q: np.ndarray) -> np.ndarray:
    out = np.array(q, copy=True)
    out[..., 1:] *= -1.0
    return out


def quat_rotate(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Rotate point(s) p by unit quaternion(s) q."""
    v = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(v, p)
    return p + w * t + np.cross(v, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Shepperd's method, stable for all rotations. Unbatched."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize_canonical(q)


def quat_exp(omega: np.ndarray) -> np.ndarray:
    """so(3) exponential map to a canonical unit quaternion."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1, keepdims=True)
    half = 0.5 * theta
    # sin(theta/2)/theta, series below SMALL_ANGLE
    k = np.where(
        theta < SMALL_ANGLE,
        0.5 - theta * theta / 48.0,
        np.sin(half) / np.where(theta == 0.0, 1.0, theta),
    )
    q = np.concatenate([np.cos(half), k * omega], axis=-1)
    return quat_normalize_canonical(q)


def quat_log(q: np.ndarray) -> np.ndarray:
    """so(3) logarithm; output angle in [0, pi]. Accepts either quaternion sign."""
    q = np.asarray(q, dtype=float)
    q = q * np.where(q[..., :1] < 0.0, -1.0, 1.0)
    w = q[..., :1]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, w)
    small = s < SMALL_ANGLE
    safe_s = np.where(s == 0.0, 1.0, s)
    scale = np.where(small, 2.0 / np.maximum(w, 0.5) * (1.0 - s * s / 3.0), angle / safe_s)
    return scale * v


def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=float)
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


# ---------------------------------------------------------------------------
# SO(3)/SE(3) Jacobian kernels
# ---------------------------------------------------------------------------


def so3_left_jacobian(omega: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3); also the V matrix coupling rotation and translation."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1)[..., None, None]
    k = skew(omega)
    k2 = k @ k
    eye = np.broadcast_to(np.eye(3), k.shape)
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    safe = np.where(theta == 0.0, 1.0, theta)
    a = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    b = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - np.sin(safe)) / (safe * safe * safe))
    return eye + a * k + b * k2


def so3_left_jacobian_inv(omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1)[..., None, None]
    k = skew(omega)
    k2 = k @ k
    eye = np.broadcast_to(np.eye(3), k.shape)
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    half = np.where(theta == 0.0, 1.0, 0.5 * theta)
    # (1 - (theta/2) cot(theta/2)) / theta^2, regular on [0, pi]
    b = np.where(
        small,
        1.0 / 12.0 + t2 / 720.0,
        (1.0 - half * np.cos(half) / np.sin(half)) / np.where(theta == 0.0, 1.0, t2),
    )
    return eye - 0.5 * k + b * k2


def se3_exp_arrays(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exponential map of se(3): twist (..., 6) -> (quat (..., 4), translation (..., 3))."""
    xi = np.asarray(xi, dtype=float)
    v, omega = xi[..., :3], xi[..., 3:]
    q = quat_exp(omega)
    t = (so3_left_jacobian(omega) @ v[..., None])[..., 0]
    return q, t


def se3_log_arrays(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Logarithm of SE(3) as a translation-first twist (..., 6)."""
    omega = quat_log(q)
    v = (so3_left_jacobian_inv(omega) @ np.asarray(t, dtype=float)[..., None])[..., 0]
    return np.concatenate([v, omega], axis=-1)


def _se3_q_block(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Coupling block of the SE(3) left Jacobian (Barfoot's Q)."""
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    p = skew(rho)
    f = skew(phi)
    fp, pf = f @ p, p @ f
    fpf = fp @ f
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)  # keeps the unselected branch finite
    s2 = safe * safe
    s3, s4, s5 = safe * s2, s2 * s2, safe * s2 * s2
    sin_t, cos_t = np.sin(safe), np.cos(safe)
    c1 = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - sin_t) / s3)
    c2 = np.where(small, 1.0 / 24.0 - t2 / 720.0, (1.0 - 0.5 * s2 - cos_t) / s4)
    c3 = 0.5 * np.where(
        small,
        c2 + 3.0 * (1.0 / 120.0 - t2 / 5040.0),
        c2 - 3.0 * (safe - sin_t - s3 / 6.0) / s5,
    )
    return (
        0.5 * p
        + c1 * (fp + pf + fpf)
        - c2 * (f @ fp + pf @ f - 3.0 * fpf)
        - c3 * (fpf @ f + f @ fpf)
    )


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[..., :3], xi[..., 3:]
    a = so3_left_jacobian_inv(phi)
    q = _se3_q_block(rho, phi)
    out = np.zeros(xi.shape[:-1] + (6, 6), dtype=float)
    out[..., :3, :3] = a
    out[..., 3:, 3:] = a
    out[..., :3, 3:] = -a @ q @ a
    return out


def se3_right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian: d/d(delta) log(exp(xi) exp(delta)) at delta = 0."""
    return se3_left_jacobian_inv(-np.asarray(xi, dtype=float))


def se3_adjoint(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Adjoint of SE(3) acting on translation-first twists."""
    r = quat_to_matrix(np.asarray(q, dtype=float))
    out = np.zeros(r.shape[:-2] + (6, 6), dtype=float)
    out[..., :3, :3] = r
    out[..., 3:, 3:] = r
    out[..., :3, 3:] = skew(t) @ r
    return out


# ---------------------------------------------------------------------------
# SE(2) kernels
# ---------------------------------------------------------------------------


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, _TAU) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def se2_exp_arrays(delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """se(2) tangent (vx, vy, w) -> (angle, translation (..., 2))."""
    delta = np.asarray(delta, dtype=float)
    v, w = delta[..., :2], delta[..., 2]
    small = np.abs(w) < SMALL_ANGLE
    safe = np.where(w == 0.0, 1.0, w)
    w2 = w * w
    s = np.where(small, 1.0 - w2 / 6.0, np.sin(safe) / safe)
    c = np.where(small, 0.5 * w - w * w2 / 24.0, (1.0 - np.cos(safe)) / safe)
    tx = s * v[..., 0] - c * v[..., 1]
    ty = c * v[..., 0] + s * v[..., 1]
    return wrap_angle(w), np.stack([tx, ty], axis=-1)


def se2_log_arrays(angle: np.ndarray, t: np.ndarray) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    t = np.asarray(t, dtype=float)
    half = 0.5 * angle
    small = np.abs(angle) < SMALL_ANGLE
    safe_half = np.where(angle == 0.0, 1.0, half)
    a = np.where(small, 1.0 - angle * angle / 12.0, safe_half * np.cos(safe_half) / np.sin(safe_half))
    vx = a * t[..., 0] + half * t[..., 1]
    vy = -half * t[..., 0] + a * t[..., 1]
    return np.stack([vx, vy, angle], axis=-1)


def rot2(angle: np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(np.shape(angle) + (2, 2), dtype=float)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rotation3:
    """Rotation in SO(3), stored as a canonical unit quaternion (w, x, y, z)."""

    wxyz: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.wxyz, dtype=float).reshape(4)
        object.__setattr__(self, "wxyz", quat_normalize_canonical(q))

    @staticmethod
    def identity() -> "Rotation3":
        return Rotation3(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def exp(omega) -> "Rotation3":
        return Rotation3(quat_exp(np.asarray(omega, dtype=float).reshape(3)))

    @staticmethod
    def from_matrix(m) -> "Rotation3":
        return Rotation3(quat_from_matrix(m))

    def log(self) -> np.ndarray:
        return quat_log(self.wxyz)

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.wxyz)

    def compose(self, other: "Rotation3") -> "Rotation3":
        return Rotation3(quat_mul(self.wxyz, other.wxyz))

    def inverse(self) -> "Rotation3":
        return Rotation3(quat_conj(self.wxyz))

    def apply(self, p) -> np.ndarray:
        return quat_rotate(self.wxyz, np.asarray(p, dtype=float))

    def angle_to(self, other: "Rotation3") -> float:
        return float(np.linalg.norm(self.inverse().compose(other).log()))


@dataclass(frozen=True)
class Transform3:
    """Rigid transform in SE(3): rotation plus translation in meters."""

    rotation: Rotation3
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float).reshape(3)
        )

    @staticmethod
    def identity() -> "Transform3":
        return Transform3(Rotation3.identity(), np.zeros(3))

    @staticmethod
    def from_parts(wxyz, pos) -> "Transform3":
        return Transform3(Rotation3(np.asarray(wxyz, dtype=float)), pos)

    @staticmethod
    def exp(xi) -> "Transform3":
        q, t = se3_exp_arrays(np.asarray(xi, dtype=float).reshape(6))
        return Transform3(Rotation3(q), t)

    def log(self) -> np.ndarray:
        return se3_log_arrays(self.rotation.wxyz, self.translation)

    def compose(self, other: "Transform3") -> "Transform3":
        return Transform3(
            self.rotation.compose(other.rotation),
            self.translation + self.rotation.apply(other.translation),
        )

    def inverse(self) -> "Transform3":
        rinv = self.rotation.inverse()
        return Transform3(rinv, -rinv.apply(self.translation))

    def apply(self, p) -> np.ndarray:
        return self.rotation.apply(p) + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix()
        m[:3, 3] = self.translation
        return m

    def to_json(self) -> dict:
        return {"wxyz": self.rotation.wxyz.tolist(), "pos": self.translation.tolist()}

    @staticmethod
    def from_json(data: dict) -> "Transform3":
        return Transform3.from_parts(data["wxyz"], data["pos"])


@dataclass(frozen=True)
class Transform2:
    """Planar rigid transform in SE(2); angle wrapped to (-pi, pi]."""

    angle: float
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angle", float(wrap_angle(self.angle)))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float).reshape(2)
        )

    @staticmethod
    def identity() -> "Transform2":
        return Transform2(0.0, np.zeros(2))

    @staticmethod
    def exp(delta) -> "Transform2":
        angle, t = se2_exp_arrays(np.asarray(delta, dtype=float).reshape(3))
        return Transform2(float(angle), t)

    def log(self) -> np.ndarray:
        return se2_log_arrays(self.angle, self.translation)

    def compose(self, other: "Transform2") -> "Transform2":
        return Transform2(
            self.angle + other.angle,
            self.translation + rot2(self.angle) @ other.translation,
        )

    def inverse(self) -> "Transform2":
        return Transform2(-self.angle, -(rot2(-self.angle) @ self.translation))

    def apply(self, p) -> np.ndarray:
        return rot2(self.angle) @ np.asarray(p, dtype=float) + self.translation

    def to_transform3(self) -> Transform3:
        return Transform3(
            Rotation3.exp(np.array([0.0, 0.0, self.angle])),
            np.array([self.translation[0], self.translation[1], 0.0]),
        )


# ---------------------------------------------------------------------------
# Operations on value types
# ---------------------------------------------------------------------------


def so3_exp(omega) -> Rotation3:
    return Rotation3.exp(omega)


def so3_log(r: Rotation3) -> np.ndarray:
    return r.log()


def se3_exp(xi) -> Transform3:
    return Transform3.exp(xi)


def se3_log(t: Transform3) -> np.ndarray:
    return t.log()


def compose(a, b):
    return a.compose(b)


def inverse(a):
    return a.inverse()


def apply(a, p) -> np.ndarray:
    return a.apply(p)


def interpolate(a: Transform3, b: Transform3, alpha: float) -> Transform3:
    """Geodesic interpolation a * exp(alpha * log(a^-1 b)); alpha in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0, 1], got {alpha}")
    return a.compose(Transform3.exp(alpha * a.inverse().compose(b).log()))


def tangent_dim(x) -> int:
    if isinstance(x, Transform3):
        return 6
    if isinstance(x, (Transform2, Rotation3)):
        return 3
    return int(np.asarray(x).size)


def local_update(x, delta):
    """Right-multiplicative retraction x * exp(delta); plain addition for arrays."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    expected = tangent_dim(x)
    if delta.size != expected:
        raise ValueError(
            f"tangent dimension mismatch: expected {expected}, got {delta.size}"
        )
    if isinstance(x, Transform3):
        return x.compose(Transform3.exp(delta))
    if isinstance(x, Transform2):
        return x.compose(Transform2.exp(delta))
    if isinstance(x, Rotation3):
        return x.compose(Rotation3.exp(delta))
    return np.asarray(x, dtype=float) + delta
