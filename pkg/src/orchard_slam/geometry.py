"""Planar rigid-body math shared by the whole mapping stack.

Poses live on SE(2). Headings are stored as a single wrapped scalar in
(-pi, pi]; every operation that produces an angle re-normalizes, so
residuals built from these primitives can be differenced naively.
Units are meters and radians throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


class DegenerateGeometryError(ValueError):
    """Geometry with no well-defined answer (e.g. zero-range bearing)."""


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]. Input must be finite."""
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def _coerce_finite(obj, name: str, *field_names: str) -> None:
    for fname in field_names:
        v = float(getattr(obj, fname))
        if not math.isfinite(v):
            raise ValueError(f"{name}.{fname} must be finite, got {v!r}")
        object.__setattr__(obj, fname, v)


@dataclass(frozen=True)
class Point2:
    """A 2D point in the local metric world frame."""

    x: float
    y: float

    def __post_init__(self) -> None:
        _coerce_finite(self, "Point2", "x", "y")

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class Pose2:
    """Robot pose: east/north position plus heading in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        _check_finite("Pose2", self.x, self.y)
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> Point2:
        return Point2(self.x, self.y)


@dataclass(frozen=True)
class Pose2Delta:
    """Relative motion expressed in the source pose's frame.

    dx is forward, dy is left, dtheta is the heading change.
    """

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self) -> None:
        _check_finite("Pose2Delta", self.dx, self.dy)
        object.__setattr__(self, "dtheta", normalize_angle(self.dtheta))


def pose_compose(a: Pose2, d: Pose2Delta) -> Pose2:
    """Apply a relative motion d in pose a's frame."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * d.dx - s * d.dy,
        a.y + s * d.dx + c * d.dy,
        a.theta + d.dtheta,
    )


def pose_between(a: Pose2, b: Pose2) -> Pose2Delta:
    """Express pose b relative to pose a; exact inverse of pose_compose."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    ex, ey = b.x - a.x, b.y - a.y
    return Pose2Delta(
        c * ex + s * ey,
        -s * ex + c * ey,
        b.theta - a.theta,
    )


def range_bearing(p: Pose2, l: Point2) -> tuple[float, float]:
    """Range and bearing from a pose to a point.

    Bearing is measured relative to the pose heading and wrapped. Raises
    DegenerateGeometryError when the point coincides with the pose position.
    """
    ex, ey = l.x - p.x, l.y - p.y
    r = math.hypot(ex, ey)
    if r <= 1e-9:
        raise DegenerateGeometryError(
            f"point {l} coincides with pose position ({p.x}, {p.y})"
        )
    phi = normalize_angle(math.atan2(ey, ex) - p.theta)
    return r, phi


def project_range_bearing(p: Pose2, r: float, phi: float) -> Point2:
    """World point at range r and relative bearing phi from pose p."""
    a = p.theta + phi
    return Point2(p.x + r * math.cos(a), p.y + r * math.sin(a))
