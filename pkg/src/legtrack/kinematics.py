"""Hip and knee angles and knee translations from mechanical-axis vectors.

Sign conventions (right leg, supine, world Y anterior and Z cranial, so the
medial direction is world -X):

* hip flexion: distal femur moves anterior (+Y) is positive.
* hip varus: distal femur moves medial is positive.
* hip roll: right-hand rotation about world +Z of the femur, relative to
  its straight-leg orientation (internal rotation is positive).
* knee flexion: ankle moves posterior relative to the condyle frame.
* knee varus: ankle moves medial (+x of the condyle frame).
* knee IE: right-hand rotation of the tibial frame about the distal
  tibial axis, relative to the condyle frame (external rotation positive).

All angles are returned in degrees, in (-180, 180].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anatomy import LandmarkTable, SceneSnapshot, point_in_world
from .errors import DegenerateProjection, InvalidBoneVector
from .geom import WORLD_X, WORLD_Z, Transform, apply, cross, dot, invert, norm

MIN_BONE_LENGTH_MM = 100.0
PROJECTION_EPS = 1e-6
GAP_RANGE_MM = (-5.0, 60.0)

# Straight-leg orientation of the condyle frame: x medial (-X), y anterior, z distal.
REFERENCE_CONDYLE_ROTATION = np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
WORLD_MEDIAL = -WORLD_X

_PLANE_NORMAL = {"yz": 0, "xz": 1, "xy": 2}


def wrap_deg(a):
    """Map degrees into (-180, 180]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + 180.0, 360.0) - 180.0
    return np.where(w == -180.0, 180.0, w)


@dataclass(frozen=True)
class LegAngles:
    hip_flexion: float
    hip_varus: float
    hip_roll: float
    knee_flexion: float
    knee_varus: float
    knee_ie: float

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(
            self.hip_flexion, self.hip_varus, self.hip_roll,
            self.knee_flexion, self.knee_varus, self.knee_ie,
        ), axis=-1)


@dataclass(frozen=True)
class KneeTranslation:
    """Tibial plateau centre in the condyle frame (mm)."""

    medial_lateral: float
    posterior_anterior: float
    gap: float

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.medial_lateral, self.posterior_anterior, self.gap), axis=-1)

    @property
    def plausible(self):
        return (GAP_RANGE_MM[0] <= np.asarray(self.gap)) & (np.asarray(self.gap) <= GAP_RANGE_MM[1])


def _signed_projected_angle(v, normal):
    """Signed angle (rad) between ``v`` and its projection onto the plane ⟂ ``normal``.

    Magnitude is atan2(|v_p × v|, v_p · v); the sign follows v · normal.
    Returns ``(angle, degenerate)``.
    """
    v = np.asarray(v, dtype=float)
    n = np.asarray(normal, dtype=float)
    along = dot(v, n)
    v_p = v - along[..., None] * n
    degenerate = norm(v_p) <= PROJECTION_EPS * norm(v)
    mag = np.arctan2(norm(cross(v_p, v)), dot(v_p, v))
    return np.where(along < 0, -mag, mag), degenerate


def _planar_angle(v, normal, reference):
    """Signed angle (rad) about ``normal`` from ``reference`` to the in-plane part of ``v``.

    Same atan2(|a × b|, a · b) form, taken between the reference axis and
    the projection, so it spans the full circle.
    """
    v = np.asarray(v, dtype=float)
    n = np.asarray(normal, dtype=float)
    v_p = v - dot(v, n)[..., None] * n
    degenerate = norm(v_p) <= PROJECTION_EPS * norm(v)
    c = cross(reference, v_p)
    mag = np.arctan2(norm(c), dot(reference, v_p))
    return np.where(dot(c, n) < 0, -mag, mag), degenerate


def projected_angle(v, plane: str, frame: np.ndarray | None = None) -> float | np.ndarray:
    """Signed angle (deg) between ``v`` and its projection onto a coordinate plane.

    ``plane`` is ``"yz"``, ``"xz"`` or ``"xy"`` of ``frame`` (a rotation whose
    columns are the axes; world axes by default).  Positive when ``v`` leans
    toward the positive side of the missing axis.
    """
    if plane not in _PLANE_NORMAL:
        raise ValueError(f"plane must be one of {sorted(_PLANE_NORMAL)}")
    axes = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
    normal = axes[..., :, _PLANE_NORMAL[plane]]
    angle, degenerate = _signed_projected_angle(v, normal)
    if np.any(degenerate):
        raise DegenerateProjection(f"vector is (nearly) normal to the {plane} plane")
    return np.degrees(angle)


def planar_angle(v, normal, reference) -> float | np.ndarray:
    """Signed angle (deg) about ``normal`` from ``reference`` to ``v`` projected into the plane."""
    angle, degenerate = _planar_angle(v, normal, reference)
    if np.any(degenerate):
        raise DegenerateProjection("vector is (nearly) parallel to the plane normal")
    return np.degrees(angle)


def _check_bone(v, name):
    if np.any(~(norm(v) > MIN_BONE_LENGTH_MM)):
        raise InvalidBoneVector(f"{name} vector shorter than {MIN_BONE_LENGTH_MM} mm")


def femur_vector(snapshot: SceneSnapshot, table: LandmarkTable, frame: str | None = None) -> np.ndarray:
    """Hip centre to condyle centre, in world coordinates or in ``frame``."""
    v = point_in_world(snapshot, table, "C") - point_in_world(snapshot, table, "B")
    _check_bone(v, "femur")
    if frame is not None:
        v = np.einsum("...ji,...j->...i", snapshot.pose(frame).rotation, v)
    return v


def tibia_vector(
    snapshot: SceneSnapshot, table: LandmarkTable, from_point: str | None = "D", condyle_frame: str = "C"
) -> np.ndarray:
    """Tibial mechanical axis expressed in the condyle frame.

    With ``from_point=None`` this is the ankle centre E in the condyle frame.
    By default the tibial plateau centre D is subtracted, which removes knee
    translations so the vector only carries the tibia's orientation.
    """
    to_c = invert(snapshot.pose(condyle_frame))
    v = apply(to_c, point_in_world(snapshot, table, "E"))
    if from_point is not None:
        v = v - apply(to_c, point_in_world(snapshot, table, from_point))
    _check_bone(v, "tibia")
    return v


def _knee_angles_rad(v_t, rel_tibia: Transform | None):
    x, z = np.eye(3)[0], np.eye(3)[2]
    varus, deg_v = _signed_projected_angle(v_t, x)
    flexion, deg_f = _planar_angle(v_t, x, z)
    if rel_tibia is None:
        ie = np.full(np.shape(varus), np.nan)
    else:
        r = rel_tibia.rotation
        ie = np.arctan2(-r[..., 0, 1], r[..., 0, 0])
    return flexion, varus, ie, deg_f | deg_v


def knee_angles(snapshot: SceneSnapshot, table: LandmarkTable, condyle_frame: str = "C", tibial_frame: str = "D"):
    """Knee ``(flexion, varus, ie)`` in degrees.

    Varus is the lean of the tibial vector out of the condyle frame's yz
    plane; flexion is its angle about the condyle x axis, measured from z;
    IE is atan2(-R[0,1], R[0,0]) of the tibial frame's rotation relative to
    the condyle frame.
    """
    v_t = tibia_vector(snapshot, table, condyle_frame=condyle_frame)
    rel = invert(snapshot.pose(condyle_frame)) @ snapshot.pose(tibial_frame)
    flexion, varus, ie, degenerate = _knee_angles_rad(v_t, rel)
    if np.any(degenerate):
        raise DegenerateProjection("tibial vector is along the condyle x axis")
    return tuple(wrap_deg(np.degrees(a)) for a in (flexion, varus, ie))


def _hip_angles_rad(v_f, condyle_rotation, reference_rotation):
    flexion, deg_f = _planar_angle(v_f, WORLD_X, -WORLD_Z)
    varus, deg_v = _signed_projected_angle(v_f, WORLD_MEDIAL)
    r = condyle_rotation @ np.swapaxes(reference_rotation, -1, -2)
    roll = np.arctan2(-r[..., 0, 1], r[..., 0, 0])
    return flexion, varus, roll, deg_f | deg_v


def hip_angles(
    snapshot: SceneSnapshot,
    table: LandmarkTable,
    condyle_frame: str = "C",
    reference_rotation: np.ndarray = REFERENCE_CONDYLE_ROTATION,
):
    """Hip ``(flexion, varus, roll)`` in degrees from the femur vector and condyle frame.

    Varus is the lean of the femur vector out of the world yz plane toward
    the midline; flexion is its angle about world X measured from the
    straight-leg direction -Z; roll is atan2(-R[0,1], R[0,0]) of the condyle
    rotation taken relative to ``reference_rotation``.
    """
    v_f = femur_vector(snapshot, table)
    r_c = snapshot.pose(condyle_frame).rotation
    flexion, varus, roll, degenerate = _hip_angles_rad(v_f, r_c, reference_rotation)
    if np.any(degenerate):
        raise DegenerateProjection("femur vector is along world X")
    return tuple(wrap_deg(np.degrees(a)) for a in (flexion, varus, roll))


def knee_translation(snapshot: SceneSnapshot, table: LandmarkTable, condyle_frame: str = "C") -> KneeTranslation:
    d = apply(invert(snapshot.pose(condyle_frame)), point_in_world(snapshot, table, "D"))
    return KneeTranslation(d[..., 0], d[..., 1], d[..., 2])


def leg_angles(
    snapshot: SceneSnapshot, table: LandmarkTable, reference_rotation: np.ndarray = REFERENCE_CONDYLE_ROTATION
) -> LegAngles:
    theta, psi, roll = hip_angles(snapshot, table, reference_rotation=reference_rotation)
    alpha, beta, gamma = knee_angles(snapshot, table)
    return LegAngles(theta, psi, roll, alpha, beta, gamma)
