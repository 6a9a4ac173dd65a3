"""2D geometry for velocity-obstacle collision avoidance.

Ellipse polygonization, exact convex Minkowski sums, truncated
velocity-obstacle cones, their half-plane linearization, and the small
velocity selection LP used by the motion model. Everything works in
double precision and in metric units unless noted otherwise.

All functions are pure and all types are immutable values, so the whole
module is safe to use from multiple threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "DegenerateConfigurationError",
    "Vec2",
    "Ellipse",
    "ConvexPolygon",
    "HalfPlane",
    "VORegion",
    "LpResult",
    "approximate_ellipse",
    "minkowski_sum",
    "polygons_overlap",
    "velocity_obstacle",
    "vo_to_halfplane",
    "solve_velocity_lp",
    "delta_overlap_error_bound",
]

_EPS = 1e-12


class GeometryError(ValueError):
    """Invalid geometric input."""


class DegenerateConfigurationError(GeometryError):
    """Configuration for which the requested construction is undefined."""


@dataclass(frozen=True, slots=True)
class Vec2:
    """2D vector (meters or meters/second depending on context)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite vector components ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def __mul__(self, s: float) -> "Vec2":
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __truediv__(self, s: float) -> "Vec2":
        return Vec2(self.x / s, self.y / s)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm_sq(self) -> float:
        return self.x * self.x + self.y * self.y

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> "Vec2":
        n = self.norm()
        if n < _EPS:
            raise DegenerateConfigurationError("cannot normalize near-zero vector")
        return Vec2(self.x / n, self.y / n)

    def perp(self) -> "Vec2":
        """Counter-clockwise perpendicular."""
        return Vec2(-self.y, self.x)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


def _wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True, slots=True)
class Ellipse:
    """Elliptical agent footprint.

    ``semi_face`` is half the visible-face height and lies along the
    orientation axis (the direction of motion); ``semi_shoulder`` is half
    the shoulder width and lies across it.
    """

    center: Vec2
    semi_face: float
    semi_shoulder: float
    orientation: float = 0.0

    def __post_init__(self):
        if self.semi_face <= 0.0 or self.semi_shoulder <= 0.0:
            raise GeometryError("ellipse semi-axes must be positive")
        object.__setattr__(self, "orientation", _wrap_angle(self.orientation))

    def boundary_point(self, angle: float) -> Vec2:
        """Boundary point at parametric angle (ellipse frame)."""
        p = Vec2(self.semi_face * math.cos(angle), self.semi_shoulder * math.sin(angle))
        return self.center + p.rotated(self.orientation)


class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices. Immutable."""

    __slots__ = ("vertices", "_arr")

    def __init__(self, vertices: Iterable[Vec2]):
        verts = tuple(vertices)
        arr = np.array([(v.x, v.y) for v in verts], dtype=np.float64)
        self._init_from(verts, arr, validate=True)

    def _init_from(self, verts: tuple[Vec2, ...], arr: np.ndarray, validate: bool):
        if validate:
            if len(verts) < 3:
                raise GeometryError("polygon needs at least 3 vertices")
            if not np.isfinite(arr).all():
                raise GeometryError("polygon has non-finite vertices")
            edges = np.roll(arr, -1, axis=0) - arr
            cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
            if not (cross > 0.0).all():
                raise GeometryError("vertices must be strictly convex and counter-clockwise")
        arr.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "_arr", arr)

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("ConvexPolygon is immutable")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ConvexPolygon":
        return cls(Vec2(float(x), float(y)) for x, y in arr)

    @classmethod
    def _from_valid_array(cls, arr: np.ndarray) -> "ConvexPolygon":
        # Fast path for internally constructed geometry that is convex and
        # CCW already; skips re-validation on the hot path.
        self = object.__new__(cls)
        verts = tuple(Vec2(float(x), float(y)) for x, y in arr)
        self._init_from(verts, np.asarray(arr, dtype=np.float64), validate=False)
        return self

    @property
    def array(self) -> np.ndarray:
        """(n, 2) read-only vertex array."""
        return self._arr

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:  # pragma: no cover
        return f"ConvexPolygon({len(self)} vertices)"

    def area(self) -> float:
        a = self._arr
        b = np.roll(a, -1, axis=0)
        return 0.5 * float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))

    def centroid(self) -> Vec2:
        c = self._arr.mean(axis=0)
        return Vec2(float(c[0]), float(c[1]))

    def translated(self, offset: Vec2) -> "ConvexPolygon":
        return ConvexPolygon._from_valid_array(self._arr + (offset.x, offset.y))

    def scaled(self, factor: float) -> "ConvexPolygon":
        """Scale about the origin; ``factor`` must be positive."""
        if factor <= 0.0:
            raise GeometryError("scale factor must be positive")
        return ConvexPolygon._from_valid_array(self._arr * factor)

    def edge_normals_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals and offsets c with the polygon = {z : n.z <= c}."""
        a = self._arr
        e = np.roll(a, -1, axis=0) - a
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        c = np.sum(n * a, axis=1)
        return n, c

    def contains_point(self, p: Vec2, tol: float = 1e-12) -> bool:
        a = self._arr
        e = np.roll(a, -1, axis=0) - a
        rel = np.array([p.x, p.y]) - a
        return bool(np.all(e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0] >= -tol))

    def closest_boundary_point(self, p: Vec2) -> tuple[Vec2, float]:
        """Closest point on the boundary and its distance to ``p``."""
        a = self._arr
        b = np.roll(a, -1, axis=0)
        q = _closest_point_on_segments(a, b, np.array([p.x, p.y]))
        return Vec2(float(q[0]), float(q[1])), math.hypot(q[0] - p.x, q[1] - p.y)


def _closest_point_on_segments(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    d = b - a
    t = np.einsum("ij,ij->i", p - a, d) / np.einsum("ij,ij->i", d, d)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", q - p, q - p)
    return q[int(np.argmin(dist2))]


@dataclass(frozen=True, slots=True)
class HalfPlane:
    """Half-plane in velocity space; ``normal`` is unit and points into the permitted side."""

    point: Vec2
    normal: Vec2

    def __post_init__(self):
        if abs(self.normal.norm() - 1.0) > 1e-9:
            raise GeometryError("half-plane normal must be unit length")

    def slack(self, v: Vec2) -> float:
        """Signed distance of ``v`` from the boundary; >= 0 means permitted."""
        return (v - self.point).dot(self.normal)


@dataclass(frozen=True)
class VORegion:
    """Truncated velocity-obstacle cone induced by one neighbor.

    ``apex`` is the neighbor velocity that offsets the cone in absolute
    velocity space. ``region`` holds the combined obstacle polygon placed at
    the relative position; the cone is spanned from the origin over it and
    truncated (near the apex) by ``region`` shrunk by the horizon. When the
    agents' shapes already overlap, ``penetrating`` is set and the ray
    fields are ``None``.
    """

    apex: Vec2
    left_ray: Vec2 | None
    right_ray: Vec2 | None
    truncation: tuple[Vec2, ...] | None
    region: ConvexPolygon
    tau: float
    penetrating: bool = False

    def contains(self, velocity: Vec2) -> bool:
        """True iff ``velocity`` (for the subject agent) collides within the horizon."""
        w = velocity - self.apex
        normals, offsets = self.region.edge_normals_offsets()
        s = normals[:, 0] * w.x + normals[:, 1] * w.y
        t_lo, t_hi = 0.0, math.inf
        for sk, ck in zip(s, offsets):
            if sk > _EPS:
                t_hi = min(t_hi, ck / sk)
            elif sk < -_EPS:
                t_lo = max(t_lo, ck / sk)
            elif ck < -_EPS:
                return False
        if t_hi <= _EPS or t_lo > t_hi + _EPS:
            return False
        return t_lo <= self.tau + _EPS


@dataclass(frozen=True, slots=True)
class LpResult:
    """Velocity LP outcome; ``feasible`` is False when the fallback ran."""

    velocity: Vec2
    feasible: bool


def approximate_ellipse(e: Ellipse, k: int) -> ConvexPolygon:
    """Circumscribe an ellipse with a ``k``-gon tangent at evenly spaced angles.

    The polygon contains the ellipse entirely (conservative). Tangency points
    include the axis endpoints, and the construction commutes with rotation
    of the ellipse. ``k`` must be even and at least 4 so the polygon is
    centrally symmetric about the ellipse center.
    """
    if k < 4 or k % 2 != 0:
        raise GeometryError(f"vertex count must be even and >= 4, got {k}")
    h = math.pi / k
    inv = 1.0 / math.cos(h)
    m = np.arange(k)
    phi = 2.0 * math.pi * m / k + h
    local = np.stack(
        [e.semi_face * np.cos(phi) * inv, e.semi_shoulder * np.sin(phi) * inv], axis=1
    )
    c, s = math.cos(e.orientation), math.sin(e.orientation)
    rot = np.array([[c, -s], [s, c]])
    world = local @ rot.T + (e.center.x, e.center.y)
    return ConvexPolygon._from_valid_array(world)


def _bottom_start(arr: np.ndarray) -> int:
    """Index of the bottom-most (ties: left-most) vertex."""
    order = np.lexsort((arr[:, 0], arr[:, 1]))
    return int(order[0])


def minkowski_sum(p: ConvexPolygon, q: ConvexPolygon) -> ConvexPolygon:
    """Exact Minkowski sum of two convex polygons via the edge merge.

    Output vertex count is at most ``len(p) + len(q)``; parallel edges are
    merged so the result stays strictly convex.
    """
    pa, qa = p.array, q.array
    ip, iq = _bottom_start(pa), _bottom_start(qa)
    pe = np.roll(pa, -ip, axis=0)
    qe = np.roll(qa, -iq, axis=0)
    ep = np.roll(pe, -1, axis=0) - pe
    eq = np.roll(qe, -1, axis=0) - qe
    # From the bottom-most vertex, CCW edge angles are nondecreasing in [0, 2pi).
    ang_p = np.mod(np.arctan2(ep[:, 1], ep[:, 0]), 2.0 * math.pi)
    ang_q = np.mod(np.arctan2(eq[:, 1], eq[:, 0]), 2.0 * math.pi)
    n, m = len(ep), len(eq)
    edges = []
    i = j = 0
    while i < n or j < m:
        if j >= m:
            edges.append(ep[i])
            i += 1
        elif i >= n:
            edges.append(eq[j])
            j += 1
        elif abs(ang_p[i] - ang_q[j]) <= 1e-12:
            edges.append(ep[i] + eq[j])
            i += 1
            j += 1
        elif ang_p[i] < ang_q[j]:
            edges.append(ep[i])
            i += 1
        else:
            edges.append(eq[j])
            j += 1
    start = pe[0] + qe[0]
    verts = start + np.cumsum([np.zeros(2)] + edges[:-1], axis=0)
    return ConvexPolygon._from_valid_array(verts)


def polygons_overlap(p: ConvexPolygon, q: ConvexPolygon) -> bool:
    """True iff the polygons intersect with positive area (separating axes).

    Touching boundaries count as non-overlapping.
    """
    pa, qa = p.array, q.array
    for a in (pa, qa):
        edges = np.roll(a, -1, axis=0) - a
        axes = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        proj_p = pa @ axes.T
        proj_q = qa @ axes.T
        if np.any(proj_p.max(axis=0) <= proj_q.min(axis=0) + _EPS) or np.any(
            proj_q.max(axis=0) <= proj_p.min(axis=0) + _EPS
        ):
            return False
    return True


def velocity_obstacle(
    combined: ConvexPolygon, rel_pos: Vec2, v_j: Vec2, tau: float
) -> VORegion:
    """Velocity obstacle for an agent induced by one neighbor.

    ``combined`` is the Minkowski sum of the two (origin-centered,
    centrally symmetric) agent polygons; ``rel_pos`` is the neighbor center
    minus the agent center. A subject velocity ``v`` collides within
    ``tau`` seconds iff ``(v - v_j) * t`` enters the translated combined
    polygon for some ``t`` in (0, tau].
    """
    if tau <= 0.0:
        raise GeometryError("horizon must be positive")
    if rel_pos.norm_sq() < _EPS * _EPS:
        raise DegenerateConfigurationError("agents are coincident; velocity obstacle undefined")
    region = combined.translated(rel_pos)
    if region.contains_point(Vec2(0.0, 0.0)):
        return VORegion(v_j, None, None, None, region, tau, penetrating=True)

    arr = region.array
    closest, _ = region.closest_boundary_point(Vec2(0.0, 0.0))
    axis = closest.normalized()
    # The region lies strictly inside the half-plane supporting its closest
    # point, so vertex angles relative to that axis stay in (-pi/2, pi/2).
    rel_ang = np.arctan2(
        axis.x * arr[:, 1] - axis.y * arr[:, 0], axis.x * arr[:, 0] + axis.y * arr[:, 1]
    )
    i_r = int(np.argmin(rel_ang))
    i_l = int(np.argmax(rel_ang))
    right = Vec2(*arr[i_r]).normalized()
    left = Vec2(*arr[i_l]).normalized()
    chain = [i_r]
    idx = i_r
    nverts = len(arr)
    while idx != i_l:
        idx = (idx - 1) % nverts
        chain.append(idx)
    truncation = tuple(Vec2(*arr[i]) / tau for i in chain)
    return VORegion(v_j, left, right, truncation, region, tau, penetrating=False)


def _closest_on_segment(a: Vec2, b: Vec2, p: Vec2) -> Vec2:
    d = b - a
    den = d.norm_sq()
    if den < _EPS * _EPS:
        return a
    t = max(0.0, min(1.0, (p - a).dot(d) / den))
    return a + d * t


def _closest_on_ray(origin: Vec2, direction: Vec2, p: Vec2) -> Vec2:
    t = max(0.0, (p - origin).dot(direction))
    return origin + direction * t


def vo_to_halfplane(
    vo: VORegion, v_i: Vec2, v_j: Vec2, reciprocity: float = 0.5
) -> HalfPlane:
    """Linearize a velocity obstacle into one permitted half-plane.

    The boundary passes through ``v_i + reciprocity * u`` where ``u`` is
    the smallest change of the relative velocity that puts it on the
    obstacle boundary; the permitted side faces away from the obstacle.
    With reciprocity 0.5 both members of a pair take half the avoidance
    responsibility. Agents already in overlap escape through the nearest
    boundary of the horizon-shrunk combined shape.
    """
    if not 0.0 <= reciprocity <= 1.0:
        raise GeometryError("reciprocity must lie in [0, 1]")
    w = v_i - v_j

    if vo.penetrating:
        shrunk = vo.region.scaled(1.0 / vo.tau)
        q, dist = shrunk.closest_boundary_point(w)
        inside = shrunk.contains_point(w)
        fallback_normal = None
        if dist <= 1e-9:
            normals, offsets = shrunk.edge_normals_offsets()
            slacks = offsets - (normals[:, 0] * w.x + normals[:, 1] * w.y)
            k = int(np.argmin(np.abs(slacks)))
            fallback_normal = Vec2(*normals[k])
        return _escape_halfplane(w, q, dist, inside, fallback_normal, v_i, reciprocity)

    # Boundary elements: right ray, near chain of the shrunk region, left ray.
    assert vo.truncation is not None and vo.right_ray is not None and vo.left_ray is not None
    chain = vo.truncation
    candidates: list[tuple[Vec2, Vec2]] = []
    candidates.append((_closest_on_ray(chain[0], vo.right_ray, w), Vec2(vo.right_ray.y, -vo.right_ray.x)))
    for a, b in zip(chain, chain[1:]):
        # The chain traverses region edges backward, so the outward normal
        # of edge (a, b) is the left perpendicular rather than the right one.
        edge = b - a
        outward = Vec2(-edge.y, edge.x).normalized()
        candidates.append((_closest_on_segment(a, b, w), outward))
    candidates.append((_closest_on_ray(chain[-1], vo.left_ray, w), Vec2(-vo.left_ray.y, vo.left_ray.x)))

    best_q, best_n, best_d = None, None, math.inf
    for q, n in candidates:
        d = (q - w).norm()
        if d < best_d:
            best_q, best_n, best_d = q, n, d
    inside = vo.contains(v_i)
    return _escape_halfplane(w, best_q, best_d, inside, best_n, v_i, reciprocity)


def _escape_halfplane(
    w: Vec2,
    q: Vec2,
    dist: float,
    inside: bool,
    element_normal: Vec2 | None,
    v_i: Vec2,
    reciprocity: float,
) -> HalfPlane:
    u = q - w
    if dist > 1e-9:
        n = u.normalized() if inside else (-u).normalized()
    else:
        assert element_normal is not None
        n = element_normal.normalized()
    return HalfPlane(v_i + u * reciprocity, n)


# ---------------------------------------------------------------------------
# Velocity selection LP (sequential two-dimensional linear programming with a
# max-violation fallback, in the style used by reciprocal collision
# avoidance libraries).


class _Line:
    __slots__ = ("px", "py", "dx", "dy")

    def __init__(self, px: float, py: float, dx: float, dy: float):
        self.px, self.py, self.dx, self.dy = px, py, dx, dy


def _lp1(lines: list[_Line], i: int, radius: float, ox: float, oy: float, direction_opt: bool):
    ln = lines[i]
    dot_pd = ln.px * ln.dx + ln.py * ln.dy
    disc = dot_pd * dot_pd + radius * radius - (ln.px * ln.px + ln.py * ln.py)
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    t_left, t_right = -dot_pd - root, -dot_pd + root
    for j in range(i):
        oth = lines[j]
        denom = ln.dx * oth.dy - ln.dy * oth.dx
        numer = oth.dx * (ln.py - oth.py) - oth.dy * (ln.px - oth.px)
        if abs(denom) <= _EPS:
            if numer < 0.0:
                return None
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None
    if direction_opt:
        t = t_right if (ox * ln.dx + oy * ln.dy) > 0.0 else t_left
    else:
        t = ln.dx * (ox - ln.px) + ln.dy * (oy - ln.py)
        t = max(t_left, min(t_right, t))
    return (ln.px + t * ln.dx, ln.py + t * ln.dy)


def _lp2(lines: list[_Line], radius: float, ox: float, oy: float, direction_opt: bool):
    if direction_opt:
        rx, ry = ox * radius, oy * radius
    elif ox * ox + oy * oy > radius * radius:
        n = math.hypot(ox, oy)
        rx, ry = ox / n * radius, oy / n * radius
    else:
        rx, ry = ox, oy
    for i, ln in enumerate(lines):
        if ln.dx * (ln.py - ry) - ln.dy * (ln.px - rx) > 0.0:
            res = _lp1(lines, i, radius, ox, oy, direction_opt)
            if res is None:
                return rx, ry, i
            rx, ry = res
    return rx, ry, len(lines)


def _lp3(lines: list[_Line], begin: int, radius: float, rx: float, ry: float):
    distance = 0.0
    for i in range(begin, len(lines)):
        ln = lines[i]
        if ln.dx * (ln.py - ry) - ln.dy * (ln.px - rx) > distance:
            proj: list[_Line] = []
            for j in range(i):
                oth = lines[j]
                denom = ln.dx * oth.dy - ln.dy * oth.dx
                if abs(denom) <= _EPS:
                    if ln.dx * oth.dx + ln.dy * oth.dy > 0.0:
                        continue
                    px, py = 0.5 * (ln.px + oth.px), 0.5 * (ln.py + oth.py)
                else:
                    t = (oth.dx * (ln.py - oth.py) - oth.dy * (ln.px - oth.px)) / denom
                    px, py = ln.px + t * ln.dx, ln.py + t * ln.dy
                ddx, ddy = oth.dx - ln.dx, oth.dy - ln.dy
                n = math.hypot(ddx, ddy)
                if n <= _EPS:
                    continue
                proj.append(_Line(px, py, ddx / n, ddy / n))
            nrx, nry, fail = _lp2(proj, radius, -ln.dy, ln.dx, True)
            if fail == len(proj):
                rx, ry = nrx, nry
            distance = ln.dx * (ln.py - ry) - ln.dy * (ln.px - rx)
    return rx, ry


def solve_velocity_lp(
    constraints: Sequence[HalfPlane], v_pref: Vec2, v_max: float
) -> LpResult:
    """Velocity closest to ``v_pref`` inside all half-planes and the speed disc.

    When the constraints admit no common velocity the fallback minimizes the
    maximum signed violation instead and the result is flagged infeasible.
    Deterministic for a fixed constraint order; the feasible optimum is
    unique, so it does not depend on the order at all.
    """
    if v_max <= 0.0:
        raise GeometryError("maximum speed must be positive")
    lines = [_Line(h.point.x, h.point.y, h.normal.y, -h.normal.x) for h in constraints]
    rx, ry, fail = _lp2(lines, v_max, v_pref.x, v_pref.y, False)
    if fail < len(lines):
        rx, ry = _lp3(lines, fail, v_max, rx, ry)
        return LpResult(Vec2(rx, ry), feasible=False)
    return LpResult(Vec2(rx, ry), feasible=True)


def delta_overlap_error_bound(r: float, delta: float, sigma: float) -> float:
    """Angular error bound for treating two overlap-prone circles as colliding.

    For two radius-``r`` circles whose centers sit ``2r - delta`` apart and a
    neighbor at distance ``sigma``, the prediction error angle is bounded by
    ``asin(2r / sigma) - asin((2r - delta) / sigma)``. Zero overlap gives a
    zero bound and the bound grows monotonically with the overlap depth.
    """
    if r <= 0.0:
        raise GeometryError("radius must be positive")
    if sigma < 2.0 * r:
        raise DegenerateConfigurationError(
            f"center distance {sigma} must be at least the diameter {2 * r}"
        )
    if not 0.0 <= delta < 2.0 * r:
        raise GeometryError(f"overlap depth must lie in [0, 2r), got {delta}")
    return math.asin(2.0 * r / sigma) - math.asin((2.0 * r - delta) / sigma)
