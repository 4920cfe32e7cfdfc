"""Collision primitives, signed distances, and the smooth activation penalty.

Primitives are spheres, capsules, and half-spaces in world frame. Signed
distance is Euclidean separation minus radii: negative when overlapping.
All functions are pure; gradients use the envelope theorem at segment
closest points and return zero vectors where the direction is undefined
(coincident centers), never NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedFeatureError
from .liegroups import Transform3


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0.0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Capsule:
    """Segment from endpoint_a to endpoint_b with a spherical radius.

    Coincident endpoints degenerate to a sphere.
    """

    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "endpoint_a", np.asarray(self.endpoint_a, dtype=float).reshape(3))
        object.__setattr__(self, "endpoint_b", np.asarray(self.endpoint_b, dtype=float).reshape(3))
        if self.radius <= 0.0:
            raise ValueError(f"capsule radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class HalfSpace:
    """Points p with normal . p <= offset are solid."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset))


Primitive = Sphere | Capsule | HalfSpace


@dataclass
class WorldModel:
    obstacles: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = []
        for p in self.obstacles:
            if isinstance(p, Sphere):
                out.append({"type": "sphere", "center": p.center.tolist(), "radius": p.radius})
            elif isinstance(p, Capsule):
                out.append(
                    {
                        "type": "capsule",
                        "endpoint_a": p.endpoint_a.tolist(),
                        "endpoint_b": p.endpoint_b.tolist(),
                        "radius": p.radius,
                    }
                )
            else:
                out.append(
                    {"type": "halfspace", "normal": p.normal.tolist(), "offset": p.offset}
                )
        return {"obstacles": out}

    @staticmethod
    def from_json(data: dict) -> "WorldModel":
        obstacles = []
        for entry in data.get("obstacles", []):
            kind = entry["type"]
            if kind == "sphere":
                obstacles.append(Sphere(entry["center"], entry["radius"]))
            elif kind == "capsule":
                obstacles.append(
                    Capsule(entry["endpoint_a"], entry["endpoint_b"], entry["radius"])
                )
            elif kind == "halfspace":
                obstacles.append(HalfSpace(entry["normal"], entry["offset"]))
            else:
                raise ValueError(f"unknown obstacle type '{kind}'")
        return WorldModel(obstacles)


# ---------------------------------------------------------------------------
# Closest-point helpers
# ---------------------------------------------------------------------------


def _closest_param_on_segment(a, b, point):
    """Parameter u in [0, 1] of the point on segment a + u (b - a) closest to point."""
    d = b - a
    dd = float(d @ d)
    if dd < 1e-16:
        return 0.0
    return float(np.clip((point - a) @ d / dd, 0.0, 1.0))


def _closest_params_segments(p1, q1, p2, q2):
    """Closest-point parameters (s, t) between segments [p1,q1] and [p2,q2].

    Clamped-quadratic method (Ericson, Real-Time Collision Detection 5.1.9).
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a < 1e-16 and e < 1e-16:
        return 0.0, 0.0
    if a < 1e-16:
        return 0.0, float(np.clip(f / e, 0.0, 1.0))
    c = float(d1 @ r)
    if e < 1e-16:
        return float(np.clip(-c / a, 0.0, 1.0)), 0.0
    b = float(d1 @ d2)
    denom = a * e - b * b
    s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0)) if denom > 1e-16 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = float(np.clip(-c / a, 0.0, 1.0))
    elif t > 1.0:
        t = 1.0
        s = float(np.clip((b - c) / a, 0.0, 1.0))
    return s, t


def _unit_or_zero(v):
    n = np.linalg.norm(v)
    if n < 1e-12:
        return np.zeros(3), 0.0
    return v / n, n


# ---------------------------------------------------------------------------
# Signed distance
# ---------------------------------------------------------------------------


def signed_distance(a: Primitive, b: Primitive) -> float:
    """Signed separation in meters; negative when the primitives overlap."""
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        return float(np.linalg.norm(a.center - b.center) - a.radius - b.radius)
    if isinstance(a, Sphere) and isinstance(b, Capsule):
        u = _closest_param_on_segment(b.endpoint_a, b.endpoint_b, a.center)
        p = b.endpoint_a + u * (b.endpoint_b - b.endpoint_a)
        return float(np.linalg.norm(a.center - p) - a.radius - b.radius)
    if isinstance(a, Capsule) and isinstance(b, Capsule):
        s, t = _closest_params_segments(a.endpoint_a, a.endpoint_b, b.endpoint_a, b.endpoint_b)
        p = a.endpoint_a + s * (a.endpoint_b - a.endpoint_a)
        q = b.endpoint_a + t * (b.endpoint_b - b.endpoint_a)
        return float(np.linalg.norm(p - q) - a.radius - b.radius)
    if isinstance(a, Sphere) and isinstance(b, HalfSpace):
        return float(b.normal @ a.center - b.offset - a.radius)
    if isinstance(a, Capsule) and isinstance(b, HalfSpace):
        return float(
            min(b.normal @ a.endpoint_a, b.normal @ a.endpoint_b) - b.offset - a.radius
        )
    if isinstance(a, HalfSpace) and isinstance(b, HalfSpace):
        raise UnsupportedFeatureError("signed distance between two half-spaces is undefined")
    # remaining cases are the mirror images of the ones above
    return signed_distance(b, a)


def sphere_obstacle_distance(center: np.ndarray, radius: float, obstacle: Primitive):
    """Distance of a sphere (center, radius) to an obstacle plus d(dist)/d(center)."""
    if isinstance(obstacle, Sphere):
        direction, n = _unit_or_zero(center - obstacle.center)
        return n - radius - obstacle.radius, direction
    if isinstance(obstacle, Capsule):
        u = _closest_param_on_segment(obstacle.endpoint_a, obstacle.endpoint_b, center)
        p = obstacle.endpoint_a + u * (obstacle.endpoint_b - obstacle.endpoint_a)
        direction, n = _unit_or_zero(center - p)
        return n - radius - obstacle.radius, direction
    if isinstance(obstacle, HalfSpace):
        return float(obstacle.normal @ center - obstacle.offset - radius), obstacle.normal.copy()
    raise UnsupportedFeatureError(f"unsupported obstacle kind {type(obstacle).__name__}")


def capsule_obstacle_distance(
    endpoint_a: np.ndarray, endpoint_b: np.ndarray, radius: float, obstacle: Primitive
):
    """Distance of a capsule to a static obstacle plus gradients at both endpoints.

    Gradients are exact almost everywhere (envelope theorem at the segment
    closest point); at coincident closest points they are zero.
    """
    if isinstance(obstacle, Sphere):
        u = _closest_param_on_segment(endpoint_a, endpoint_b, obstacle.center)
        p = endpoint_a + u * (endpoint_b - endpoint_a)
        direction, n = _unit_or_zero(p - obstacle.center)
        d = n - radius - obstacle.radius
        return d, (1.0 - u) * direction, u * direction
    if isinstance(obstacle, Capsule):
        s, t = _closest_params_segments(
            endpoint_a, endpoint_b, obstacle.endpoint_a, obstacle.endpoint_b
        )
        p = endpoint_a + s * (endpoint_b - endpoint_a)
        q = obstacle.endpoint_a + t * (obstacle.endpoint_b - obstacle.endpoint_a)
        direction, n = _unit_or_zero(p - q)
        d = n - radius - obstacle.radius
        return d, (1.0 - s) * direction, s * direction
    if isinstance(obstacle, HalfSpace):
        da = float(obstacle.normal @ endpoint_a)
        db = float(obstacle.normal @ endpoint_b)
        d = min(da, db) - obstacle.offset - radius
        if da <= db:
            return d, obstacle.normal.copy(), np.zeros(3)
        return d, np.zeros(3), obstacle.normal.copy()
    raise UnsupportedFeatureError(f"unsupported obstacle kind {type(obstacle).__name__}")


# ---------------------------------------------------------------------------
# Activation penalty
# ---------------------------------------------------------------------------


def activation(d, eta: float):
    """Smooth collision penalty of the signed distance.

    Linear inside penetration, quadratic ramp within the buffer, zero beyond:
    d < 0 -> -d + eta/2; 0 <= d < eta -> (eta - d)^2 / (2 eta); d >= eta -> 0.
    C1-continuous at both joints. Accepts arrays.
    """
    if eta <= 0.0:
        raise ValueError(f"buffer distance must be positive, got {eta}")
    d = np.asarray(d, dtype=float)
    out = np.where(
        d < 0.0,
        -d + 0.5 * eta,
        np.where(d < eta, (0.5 / eta) * (eta - d) ** 2, 0.0),
    )
    return out if out.ndim else float(out)


def activation_deriv(d, eta: float):
    """d(activation)/dd: -1 inside, -(eta - d)/eta in the buffer, 0 beyond."""
    if eta <= 0.0:
        raise ValueError(f"buffer distance must be positive, got {eta}")
    d = np.asarray(d, dtype=float)
    out = np.where(d < 0.0, -1.0, np.where(d < eta, -(eta - d) / eta, 0.0))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Swept volumes and rigid motion
# ---------------------------------------------------------------------------


def swept_capsules(spheres_t: list[Sphere], spheres_t_plus_1: list[Sphere]) -> list[Capsule]:
    """Connect corresponding spheres at consecutive timesteps into capsules."""
    if len(spheres_t) != len(spheres_t_plus_1):
        raise ValueError(
            f"sphere lists differ in length: {len(spheres_t)} vs {len(spheres_t_plus_1)}"
        )
    capsules = []
    for s0, s1 in zip(spheres_t, spheres_t_plus_1):
        if s0.radius != s1.radius:
            raise ValueError(
                f"corresponding spheres must share a radius, got {s0.radius} vs {s1.radius}"
            )
        capsules.append(Capsule(s0.center, s1.center, s0.radius))
    return capsules


def transform_primitive(t: Transform3, prim: Primitive) -> Primitive:
    """Rigidly transform a primitive into another frame."""
    if isinstance(prim, Sphere):
        return Sphere(t.apply(prim.center), prim.radius)
    if isinstance(prim, Capsule):
        return Capsule(t.apply(prim.endpoint_a), t.apply(prim.endpoint_b), prim.radius)
    if isinstance(prim, HalfSpace):
        n = t.rotation.apply(prim.normal)
        return HalfSpace(n, prim.offset + float(n @ t.translation))
    raise UnsupportedFeatureError(f"unsupported primitive kind {type(prim).__name__}")
