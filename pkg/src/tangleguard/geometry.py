"""Discretized curves, arm kinematic state, obstacles, and workspace geometry.

Arms are polylines: ordered 3D node positions sampled along the physical
centerline. Everything downstream (invariants, crossing detection, the
simulator) consumes these value types, so they stay deliberately small and
immutable in spirit: functions return new arrays instead of mutating inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Polyline",
    "ArmState",
    "Obstacle",
    "Workspace",
    "arc_length",
    "min_obstacle_clearance",
    "curvature_profile",
    "torsion_profile",
    "containment_margin",
]

DEFAULT_ARM_RADIUS = 0.05  # tube radius (m) used in clearance checks


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) point array, got shape {pts.shape}")
    if pts.shape[0] < 2:
        raise ValueError("polyline needs at least 2 points")
    if not np.isfinite(pts).all():
        raise ValueError("polyline contains non-finite coordinates")
    seg = np.diff(pts, axis=0)
    if (np.einsum("ij,ij->i", seg, seg) == 0.0).any():
        raise ValueError("consecutive polyline points must be distinct")
    return pts


@dataclass(frozen=True)
class Polyline:
    """Ordered sequence of 3D positions (meters), at least two, consecutive distinct."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))

    @property
    def segments(self) -> np.ndarray:
        return np.diff(self.points, axis=0)

    def __len__(self) -> int:
        return len(self.points)


def _points_of(p) -> np.ndarray:
    return p.points if isinstance(p, Polyline) else _as_points(p)


@dataclass
class ArmState:
    """Kinematic snapshot of one arm: centerline plus per-node velocities and frames."""

    centerline: Polyline
    velocities: np.ndarray = None
    orientations: np.ndarray = None

    def __post_init__(self):
        if not isinstance(self.centerline, Polyline):
            self.centerline = Polyline(self.centerline)
        n = len(self.centerline)
        if self.velocities is None:
            self.velocities = np.zeros((n, 3))
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.velocities.shape != (n, 3):
            raise ValueError("need one velocity vector per centerline node")
        if self.orientations is None:
            self.orientations = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
        self.orientations = np.asarray(self.orientations, dtype=float)
        if self.orientations.shape != (n, 3, 3):
            raise ValueError("need one orientation matrix per centerline node")
        rtr = np.einsum("nij,nik->njk", self.orientations, self.orientations)
        if not np.allclose(rtr, np.eye(3), atol=1e-9):
            raise ValueError("orientation matrices must be orthonormal")
        if not np.allclose(np.linalg.det(self.orientations), 1.0, atol=1e-9):
            raise ValueError("orientation matrices must have determinant +1")


@dataclass(frozen=True)
class Obstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")


@dataclass
class Workspace:
    """Axis-aligned box with static spherical obstacles and task target points."""

    bounds: np.ndarray  # (2, 3): min corner, max corner
    obstacles: list = field(default_factory=list)
    targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(2, 3)
        if (self.bounds[0] >= self.bounds[1]).any():
            raise ValueError("workspace min corner must be strictly below max corner")
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 3)


def arc_length(p) -> float:
    """Total length of a polyline: sum of segment lengths."""
    pts = _points_of(p)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def min_obstacle_clearance(a: ArmState, w: Workspace, r_arm: float = DEFAULT_ARM_RADIUS) -> float:
    """Smallest signed surface distance between arm nodes and obstacles.

    Returns min over nodes and obstacles of |r - o| - r_obs - r_arm; negative
    values mean penetration. With no obstacles the minimum is vacuous and the
    +inf sentinel is returned.
    """
    if not w.obstacles:
        return float("inf")
    pts = a.centerline.points
    centers = np.stack([o.center for o in w.obstacles])
    radii = np.array([o.radius for o in w.obstacles])
    d = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
    return float((d - radii[None, :] - r_arm).min())


def curvature_profile(p) -> np.ndarray:
    """Discrete curvature at each interior node via the circumscribed circle.

    For node triple (a, b, c): kappa = 4 * area(a, b, c) / (|ab| |bc| |ca|),
    the reciprocal of the circumradius. Collinear triples give 0.
    """
    pts = _points_of(p)
    if len(pts) < 3:
        raise ValueError("curvature needs at least 3 points")
    a, b, c = pts[:-2], pts[1:-1], pts[2:]
    ab, bc, ca = b - a, c - b, a - c
    cross = np.cross(ab, bc)
    area2 = np.linalg.norm(cross, axis=1)  # twice the triangle area
    denom = (
        np.linalg.norm(ab, axis=1) * np.linalg.norm(bc, axis=1) * np.linalg.norm(ca, axis=1)
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(denom > 0, 2.0 * area2 / np.where(denom > 0, denom, 1.0), 0.0)
    return kappa


def torsion_profile(p) -> np.ndarray:
    """Discrete torsion from the turning of consecutive osculating planes.

    The osculating plane at interior node i is spanned by the incoming and
    outgoing edges; its binormal is their normalized cross product. Torsion
    over edge i is the signed angle between consecutive planes divided by the
    edge length. Planes are unoriented, so a binormal sign flip at an
    inflection contributes nothing; planar curves report exactly 0. Windows
    with a degenerate (collinear) plane also report 0.
    """
    pts = _points_of(p)
    if len(pts) < 4:
        return np.zeros(max(0, len(pts) - 3))
    e = np.diff(pts, axis=0)
    b = np.cross(e[:-1], e[1:])
    norm = np.linalg.norm(b, axis=1)
    ok = norm > 1e-12
    b = np.where(ok[:, None], b / np.where(ok, norm, 1.0)[:, None], 0.0)
    b0, b1 = b[:-1], b[1:]
    both = ok[:-1] & ok[1:]
    cross = np.cross(b0, b1)
    # atan2 of |b0 x b1| against |b0 . b1| is the unoriented-plane angle and
    # stays accurate where arccos loses digits
    ang = np.arctan2(np.linalg.norm(cross, axis=1), np.abs(np.einsum("ij,ij->i", b0, b1)))
    # sign: direction the plane rotates about the shared edge
    edge = e[1:-1]
    elen = np.linalg.norm(edge, axis=1)
    sign = np.sign(np.einsum("ij,ij->i", cross, edge))
    sign = np.where(sign == 0, 1.0, sign)
    tau = np.where(both & (elen > 0), sign * ang / np.where(elen > 0, elen, 1.0), 0.0)
    return tau


def containment_margin(w: Workspace, points) -> float:
    """Distance from the most-exposed point to the workspace boundary (negative outside)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lo = (pts - w.bounds[0]).min()
    hi = (w.bounds[1] - pts).min()
    return float(min(lo, hi))
