"""Room geometry, agent poses, and the 14-value scenario feature encoding.

Coordinates are meters in the room frame; angles are radians in (-pi, pi],
counter-clockwise from +x. Cardinal directions map to the room axes:
north = +y, south = -y, west = -x, east = +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi

# Two positions closer than this are treated as coincident (undefined bearing).
EPS_POS = 1e-6
# Points closer to the boundary than this are not "strictly inside".
EPS_BOUNDARY = 1e-9


class GeometryError(ValueError):
    """Base class for scenario-geometry violations."""


class OutsideRoom(GeometryError):
    """A pose or query point is outside (or on the boundary of) the room."""


class DegenerateScenario(GeometryError):
    """Scenario geometry admits no defined feature encoding."""


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return -((math.pi - angle) % TWO_PI - math.pi)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; heading is normalized into (-pi, pi] on construction."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise GeometryError(f"non-finite pose ({self.x}, {self.y}, {self.heading})")
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose2D":
        return cls(float(d["x"]), float(d["y"]), float(d.get("heading", 0.0)))


class RoomPolygon:
    """Simple (non-self-intersecting) polygon with positive area.

    Vertices are stored counter-clockwise regardless of input order.
    """

    def __init__(self, vertices):
        verts = np.asarray(vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("polygon needs at least 3 (x, y) vertices")
        if not np.all(np.isfinite(verts)):
            raise GeometryError("polygon vertices must be finite")
        if np.any(np.all(verts == np.roll(verts, -1, axis=0), axis=1)):
            raise GeometryError("polygon has repeated consecutive vertices")
        signed = _signed_area(verts)
        if abs(signed) < 1e-12:
            raise GeometryError("polygon is degenerate (zero area)")
        if signed < 0.0:
            verts = verts[::-1].copy()
        if _self_intersects(verts):
            raise GeometryError("polygon is self-intersecting")
        self._verts = verts
        self._verts.setflags(write=False)
        self._area = abs(signed)

    @property
    def vertices(self) -> np.ndarray:
        return self._verts

    @property
    def area(self) -> float:
        return self._area

    @property
    def bounding_box(self) -> tuple[float, float, float, float]:
        xs, ys = self._verts[:, 0], self._verts[:, 1]
        return (xs.min(), ys.min(), xs.max(), ys.max())

    def contains(self, xs, ys, strict: bool = True):
        """Vectorized point-in-polygon test (strict excludes the boundary)."""
        xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
        ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
        inside = _kernels.contains(xs, ys, self._verts[:, 0], self._verts[:, 1])
        if strict:
            dist = _kernels.edge_distance(xs, ys, self._verts[:, 0], self._verts[:, 1])
            inside = inside & (dist > EPS_BOUNDARY)
        return inside

    def contains_point(self, x: float, y: float, strict: bool = True) -> bool:
        return bool(self.contains([x], [y], strict=strict)[0])

    def to_dict(self) -> dict:
        return {"vertices": self._verts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RoomPolygon":
        return cls(d["vertices"])

    def __repr__(self):
        return f"RoomPolygon({self._verts.tolist()})"


def _signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _self_intersects(verts: np.ndarray) -> bool:
    m = verts.shape[0]
    segs = [(verts[i], verts[(i + 1) % m]) for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            if j == i or (j + 1) % m == i or (i + 1) % m == j:
                continue  # shared endpoint with a neighbor is not a crossing
            if _segments_cross(*segs[i], *segs[j]):
                return True
    return False


def _segments_cross(p1, p2, p3, p4) -> bool:
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    for p, a, b, d in ((p1, p3, p4, d1), (p2, p3, p4, d2), (p3, p1, p2, d3), (p4, p1, p2, d4)):
        if d == 0 and _on_segment(a, b, p):
            return True
    return False


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


FEATURE_NAMES = (
    "hr_dist",
    "hr_sin",
    "hr_cos",
    "o_sin",
    "o_cos",
    "h_n",
    "h_s",
    "h_w",
    "h_e",
    "r_n",
    "r_s",
    "r_w",
    "r_e",
    "a",
)

NUM_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    """One HRI scenario encoded as the fixed 14-value feature tuple."""

    hr_dist: float
    hr_sin: float
    hr_cos: float
    o_sin: float
    o_cos: float
    h_n: float
    h_s: float
    h_w: float
    h_e: float
    r_n: float
    r_s: float
    r_w: float
    r_e: float
    a: float

    def __post_init__(self):
        if abs(self.hr_sin**2 + self.hr_cos**2 - 1.0) > 1e-9:
            raise GeometryError("(hr_sin, hr_cos) is not a unit encoding")
        if abs(self.o_sin**2 + self.o_cos**2 - 1.0) > 1e-9:
            raise GeometryError("(o_sin, o_cos) is not a unit encoding")
        for name in ("hr_dist", "h_n", "h_s", "h_w", "h_e", "r_n", "r_s", "r_w", "r_e"):
            if getattr(self, name) < 0.0:
                raise GeometryError(f"{name} must be nonnegative")
        if self.a <= 0.0:
            raise GeometryError("area must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "FeatureVector":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (NUM_FEATURES,):
            raise GeometryError(f"feature array must have shape ({NUM_FEATURES},)")
        return cls(*(float(v) for v in arr))

    @property
    def bearing(self) -> float:
        """Robot bearing in the human's body frame (0 = directly ahead)."""
        return math.atan2(self.hr_sin, self.hr_cos)


def polygon_area(room: RoomPolygon) -> float:
    """Shoelace area of the room polygon, square meters."""
    return room.area


def boundary_distances(point, room: RoomPolygon) -> tuple[float, float, float, float]:
    """Distances from an interior point to the nearest wall along +y, -y, -x, +x.

    Raises OutsideRoom if the point is not strictly inside the polygon.
    """
    x, y = float(point[0]), float(point[1])
    return tuple(_boundary_distances_batch(np.array([x]), np.array([y]), room)[0])


def _boundary_distances_batch(xs: np.ndarray, ys: np.ndarray, room: RoomPolygon) -> np.ndarray:
    inside = room.contains(xs, ys, strict=True)
    if not np.all(inside):
        bad = np.argmax(~inside)
        raise OutsideRoom(f"point ({xs[bad]}, {ys[bad]}) is not strictly inside the room")
    dists = _kernels.ray_distances(xs, ys, room.vertices[:, 0], room.vertices[:, 1])
    if not np.all(np.isfinite(dists)):
        raise OutsideRoom("cardinal ray failed to hit the boundary")
    return dists


def extract_features(room: RoomPolygon, human: Pose2D, robot: Pose2D) -> FeatureVector:
    """Encode a (room, human, robot) scenario as the 14-value feature vector.

    The human-robot angle is the robot's bearing in the human's body frame;
    the relative orientation is robot.heading - human.heading. Both poses
    must lie strictly inside the room.
    """
    dx = robot.x - human.x
    dy = robot.y - human.y
    hr_dist = math.hypot(dx, dy)
    if hr_dist < EPS_POS:
        raise DegenerateScenario(f"human and robot coincide (distance {hr_dist:.2e} m)")

    ch, sh = math.cos(human.heading), math.sin(human.heading)
    bearing = math.atan2(-sh * dx + ch * dy, ch * dx + sh * dy)
    rel = normalize_angle(robot.heading - human.heading)

    dists = _boundary_distances_batch(
        np.array([human.x, robot.x]), np.array([human.y, robot.y]), room
    )
    h_n, h_s, h_w, h_e = dists[0]
    r_n, r_s, r_w, r_e = dists[1]

    return FeatureVector(
        hr_dist=hr_dist,
        hr_sin=math.sin(bearing),
        hr_cos=math.cos(bearing),
        o_sin=math.sin(rel),
        o_cos=math.cos(rel),
        h_n=h_n,
        h_s=h_s,
        h_w=h_w,
        h_e=h_e,
        r_n=r_n,
        r_s=r_s,
        r_w=r_w,
        r_e=r_e,
        a=room.area,
    )
