"""Coordinate frames built from marker positions and CT landmark points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry
from .geom import WORLD_Y, Transform, cross, norm, unit

MIN_SEPARATION_MM = 1.0
MIN_HINT_ANGLE_DEG = 1.0
MIN_ALTITUDE_MM = 1.0


def _axis_frame(origin, z_dir, x_hint) -> Transform:
    # z fixed; y normal to the (z, x_hint) plane; x completes the right-handed set
    z = unit(z_dir)
    y = unit(cross(z, x_hint))
    x = cross(y, z)
    return Transform(np.stack((x, y, z), axis=-1), origin)


def frame_from_marker_pair(h, g, y_hint=WORLD_Y) -> Transform:
    """Frame at marker ``h`` with z pointing at marker ``g``.

    x = unit(y_hint × z), y = z × x.  The hint must be body-fixed (for
    instance the direction to a third marker) for the frame to follow the
    body; the world Y default only suits a body that never rolls about z.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    y_hint = np.broadcast_to(np.asarray(y_hint, dtype=float), np.broadcast_shapes(h.shape, g.shape))
    d = g - h
    length = norm(d)
    if np.any(length <= MIN_SEPARATION_MM):
        raise DegenerateGeometry(f"markers closer than {MIN_SEPARATION_MM} mm")
    hint_len = norm(y_hint)
    if np.any(hint_len == 0):
        raise DegenerateGeometry("zero-length y hint")
    sin_angle = norm(cross(d, y_hint)) / (length * hint_len)
    if np.any(sin_angle <= np.sin(np.radians(MIN_HINT_ANGLE_DEG))):
        raise DegenerateGeometry(f"y hint within {MIN_HINT_ANGLE_DEG} deg of the marker axis")
    z = d / length[..., None]
    x = unit(cross(y_hint, z))
    y = cross(z, x)
    return Transform(np.stack((x, y, z), axis=-1), h)


def _check_triangle(p0, p1, p2, names: str) -> None:
    sides = [norm(p1 - p0), norm(p2 - p1), norm(p0 - p2)]
    if any(np.any(s <= MIN_SEPARATION_MM) for s in sides):
        raise DegenerateGeometry(f"points {names} closer than {MIN_SEPARATION_MM} mm")
    longest = np.maximum.reduce(sides)
    altitude = norm(cross(p1 - p0, p2 - p0)) / longest
    if np.any(altitude <= MIN_ALTITUDE_MM):
        raise DegenerateGeometry(f"points {names} are collinear")


def condyle_frame(b, k, c) -> Transform:
    """Frame at the femoral condyle centre ``c`` with z along the mechanical axis.

    ``b`` is the hip joint centre and ``k`` the neck/shaft junction:
    z = unit(c - b), x' = b - k, y = unit(z × x'), x = y × z.
    """
    b, k, c = (np.asarray(p, dtype=float) for p in (b, k, c))
    _check_triangle(b, k, c, "B, K, C")
    return _axis_frame(c, c - b, b - k)


def tibia_frame(d, e, p) -> Transform:
    """Frame at the tibial plateau centre ``d`` with z along the tibial mechanical axis.

    Mirrors :func:`condyle_frame`: z = unit(e - d) toward the ankle centre,
    x' = p - d toward the medial plateau reference ``p``.  At the neutral knee
    it coincides in orientation with the condyle frame.
    """
    d, e, p = (np.asarray(q, dtype=float) for q in (d, e, p))
    _check_triangle(d, e, p, "D, E, P")
    return _axis_frame(d, e - d, p - d)


@dataclass(frozen=True)
class FrameSpec:
    """How to build a marker frame on a rigid body.

    The y hint is either two marker labels on the same body (body-fixed,
    preferred) or a constant world vector.
    """

    id: str
    body: str
    origin: str
    toward: str
    y_hint_markers: tuple[str, str] | None = None
    y_hint: tuple[float, float, float] | None = None

    def labels(self) -> tuple[str, ...]:
        extra = self.y_hint_markers or ()
        return (self.origin, self.toward, *extra)

    def build(self, markers: dict[str, np.ndarray]) -> Transform:
        """``markers`` maps label -> position(s) in the world frame."""
        h, g = markers[self.origin], markers[self.toward]
        if self.y_hint_markers is not None:
            a, b = self.y_hint_markers
            hint = np.asarray(markers[b]) - np.asarray(markers[a])
        elif self.y_hint is not None:
            hint = np.asarray(self.y_hint, dtype=float)
        else:
            hint = WORLD_Y
        return frame_from_marker_pair(h, g, hint)

