"""Synthetic right leg with ground truth: marker streams, CT tables, joint angles.

Model
-----
The femur bone frame sits at the hip centre B and is world-aligned in the
straight supine pose.  The hip is a ball joint: the femur frame is rotated
by ``Rx(flexion) @ Ry(varus) @ Rz(roll)`` about B.  The condyle frame C sits
at the distal end of the mechanical axis.  The knee is a 6-DoF joint: the
tibial frame (origin at the plateau centre D) is placed in the condyle frame
by ``Rx(flexion) @ Ry(varus) @ Rz(ie)`` and then the translation
``(medial/lateral, posterior/anterior, gap)``.  These orders are repo
conventions chosen so the kinematics module inverts them exactly.

Rigid bodies are screwed to the femur (markers H, G, F3, F4), tibia (M, N,
T3, T4) and arthroscope (S, S2, S3, S4).  The arthroscope tip is placed at a
commanded position in the condyle frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .anatomy import Landmark, LandmarkTable
from .config import ConsistencyCheck, SessionConfig
from .errors import InvalidParams, OutOfRange
from .frames import FrameSpec
from .geom import Transform, apply, compose, invert, rot_x, rot_y, rot_z
from .kinematics import REFERENCE_CONDYLE_ROTATION, KneeTranslation, LegAngles
from .rigidbody import MarkerStream, RigidBodyDef

OPTICAL_ACCURACY_MM = 0.03
CT_ACCURACY_MM = 0.3

_rad = np.radians


def _pose(rotation, translation) -> Transform:
    return Transform(np.asarray(rotation, dtype=float), np.asarray(translation, dtype=float))


@dataclass(frozen=True, eq=False)
class LegModelParams:
    hip_centre: tuple[float, float, float] = (1000.0, 900.0, 1500.0)
    femur_length_mm: float = 420.0
    tibia_length_mm: float = 380.0
    # neck/shaft junction K relative to B in the femur frame (lateral, anterior, cranial)
    neck_offset_mm: tuple[float, float, float] = (42.0, 0.0, -35.0)
    medial_plateau_offset_mm: float = 35.0
    femur_body: RigidBodyDef = field(default_factory=lambda: RigidBodyDef.from_markers(
        "femur", {"H": (0, 0, 0), "G": (0, 0, 70), "F3": (0, 45, 30), "F4": (-35, 20, 50)}))
    tibia_body: RigidBodyDef = field(default_factory=lambda: RigidBodyDef.from_markers(
        "tibia", {"M": (0, 0, 0), "N": (0, 0, 65), "T3": (0, 40, 25), "T4": (30, 25, 55)}))
    scope_body: RigidBodyDef = field(default_factory=lambda: RigidBodyDef.from_markers(
        "scope", {"S": (0, 0, 0), "S2": (0, 0, 60), "S3": (0, 40, 20), "S4": (30, 15, 45)}))
    # rigid-body mounts: body frame in the femur frame / tibial frame
    femur_mount: Transform = field(default_factory=lambda: _pose(rot_y(_rad(20)) @ rot_x(_rad(-15)), (60, 75, -300)))
    tibia_mount: Transform = field(default_factory=lambda: _pose(rot_x(_rad(160)) @ rot_z(_rad(30)), (25, 60, 110)))
    # arthroscope tip in the scope body frame and the scope's orientation in the condyle frame
    scope_tip_mm: tuple[float, float, float] = (0.0, -25.0, -190.0)
    scope_rotation: np.ndarray = field(default_factory=lambda: rot_x(_rad(-120)) @ rot_z(_rad(10)))

    def validate(self) -> "LegModelParams":
        if not (self.femur_length_mm > 0 and self.tibia_length_mm > 0 and self.medial_plateau_offset_mm > 0):
            raise InvalidParams("lengths must be positive")
        if np.linalg.norm(self.neck_offset_mm) <= 1.0:
            raise InvalidParams("neck offset must be longer than 1 mm")
        labels = [*self.femur_body.labels, *self.tibia_body.labels, *self.scope_body.labels]
        if len(set(labels)) != len(labels):
            raise InvalidParams("marker labels must be unique across bodies")
        return self

    @property
    def bodies(self) -> tuple[RigidBodyDef, RigidBodyDef, RigidBodyDef]:
        return self.femur_body, self.tibia_body, self.scope_body


CHANNELS = (
    "hip_flexion", "hip_varus", "hip_roll",
    "knee_flexion", "knee_varus", "knee_ie",
    "knee_ml", "knee_pa", "knee_gap",
    "scope_x", "scope_y", "scope_z",
)
DEFAULT_SCOPE_TIP = (0.0, 20.0, 5.0)


@dataclass(frozen=True, eq=False)
class MotionScript:
    """Time-sampled joint commands.

    ``commands`` is ``(N, 12)`` in :data:`CHANNELS` order: hip and knee
    angles in degrees, knee translation in mm (condyle frame) and the scope
    tip target in mm (condyle frame).
    """

    times: np.ndarray
    commands: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        commands = np.asarray(self.commands, dtype=float).reshape(len(times), len(CHANNELS))
        if len(times) == 0:
            raise InvalidParams("script has no samples")
        if np.any(np.diff(times) <= 0) or times[0] < 0:
            raise InvalidParams("script times must be non-negative and strictly increasing")
        if not np.isfinite(commands).all():
            raise InvalidParams("script commands must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "commands", commands)

    @property
    def rate_hz(self) -> float:
        return float(1.0 / np.median(np.diff(self.times))) if len(self.times) > 1 else 0.0

    def channel(self, name: str) -> np.ndarray:
        return self.commands[:, CHANNELS.index(name)]

    @classmethod
    def from_functions(
        cls, duration_s: float, rate_hz: float, **channels: float | Callable[[np.ndarray], np.ndarray]
    ) -> "MotionScript":
        """Sample ``channels`` (constants or functions of time) on a regular grid.

        Unspecified channels are zero, except the scope tip target.
        """
        unknown = set(channels) - set(CHANNELS)
        if unknown:
            raise InvalidParams(f"unknown channels {sorted(unknown)}")
        n = int(round(duration_s * rate_hz))
        if n < 1:
            raise InvalidParams("script needs at least one sample")
        t = np.arange(n) / rate_hz
        defaults = dict(zip(("scope_x", "scope_y", "scope_z"), DEFAULT_SCOPE_TIP))
        cols = []
        for name in CHANNELS:
            value = channels.get(name, defaults.get(name, 0.0))
            cols.append(np.broadcast_to(value(t) if callable(value) else value, t.shape))
        return cls(t, np.stack(cols, axis=1))

    @classmethod
    def zeros(cls, duration_s: float, rate_hz: float) -> "MotionScript":
        return cls.from_functions(duration_s, rate_hz)


def default_script(duration_s: float = 300.0, rate_hz: float = 100.0) -> MotionScript:
    """A slow mixed hip/knee motion typical of leg manipulation."""
    w = 2 * np.pi
    return MotionScript.from_functions(
        duration_s, rate_hz,
        hip_flexion=lambda t: 30 - 30 * np.cos(w * t / 40),
        hip_varus=lambda t: 10 * np.sin(w * t / 55),
        hip_roll=lambda t: 8 * np.sin(w * t / 70),
        knee_flexion=lambda t: 45 - 45 * np.cos(w * t / 25),
        knee_varus=lambda t: 4 * np.sin(w * t / 33),
        knee_ie=lambda t: 8 * np.sin(w * t / 47),
        knee_ml=lambda t: 1.0 * np.sin(w * t / 29),
        knee_pa=lambda t: 2.0 * np.sin(w * t / 37),
        knee_gap=lambda t: 3.0 + 2.0 * np.sin(w * t / 41),
    )


def sweep_script(duration_s: float = 60.0, rate_hz: float = 100.0) -> MotionScript:
    """Hip flexion 0-90, hip varus ±20, knee flexion 0-120, knee varus ±10, knee IE ±15 (deg)."""
    w = 2 * np.pi
    return MotionScript.from_functions(
        duration_s, rate_hz,
        hip_flexion=lambda t: 45 - 45 * np.cos(w * t / 20),
        hip_varus=lambda t: 20 * np.sin(w * t / 13),
        hip_roll=lambda t: 10 * np.sin(w * t / 17),
        knee_flexion=lambda t: 60 - 60 * np.cos(w * t / 15),
        knee_varus=lambda t: 10 * np.sin(w * t / 11),
        knee_ie=lambda t: 15 * np.sin(w * t / 7),
    )


@dataclass(frozen=True)
class NoiseSpec:
    marker_sigma_mm: float = 0.0
    landmark_sigma_mm: float = 0.0
    occlusion_prob: float = 0.0
    occlusion_by_label: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.marker_sigma_mm < 0 or self.landmark_sigma_mm < 0:
            raise InvalidParams("noise sigmas must be non-negative")
        probs = [self.occlusion_prob, *self.occlusion_by_label.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise InvalidParams("occlusion probabilities must lie in [0, 1]")


PAPER_NOISE = NoiseSpec(marker_sigma_mm=OPTICAL_ACCURACY_MM, landmark_sigma_mm=CT_ACCURACY_MM)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ground truth: commands, world frame poses and world point positions per sample."""

    params: LegModelParams
    script: MotionScript
    frames: Mapping[str, Transform]
    points: Mapping[str, np.ndarray]

    @property
    def times(self) -> np.ndarray:
        return self.script.times


def _forward(params: LegModelParams, commands: np.ndarray) -> tuple[dict[str, Transform], dict[str, np.ndarray]]:
    """World frames and points for commands ``(..., 12)``."""
    c = np.asarray(commands, dtype=float)
    a = np.radians(c[..., :6])
    shape = c.shape[:-1]
    r_hip = rot_x(a[..., 0]) @ rot_y(a[..., 1]) @ rot_z(a[..., 2])
    femur = Transform(r_hip, np.broadcast_to(np.asarray(params.hip_centre, dtype=float), shape + (3,)))
    condyle = compose(femur, _pose(REFERENCE_CONDYLE_ROTATION, (0.0, 0.0, -params.femur_length_mm)))
    r_knee = rot_x(a[..., 3]) @ rot_y(a[..., 4]) @ rot_z(a[..., 5])
    tibia = compose(condyle, Transform(r_knee, c[..., 6:9]))
    scope_in_c = Transform(
        np.broadcast_to(params.scope_rotation, shape + (3, 3)),
        c[..., 9:12] - params.scope_rotation @ np.asarray(params.scope_tip_mm, dtype=float),
    )
    frames = {
        "femur_bone": femur,
        "C": condyle,
        "D": tibia,
        "femur": compose(femur, params.femur_mount),
        "tibia": compose(tibia, params.tibia_mount),
        "scope": compose(condyle, scope_in_c),
    }
    points = {
        "B": femur.translation,
        "K": apply(femur, params.neck_offset_mm),
        "C": condyle.translation,
        "D": tibia.translation,
        "E": apply(tibia, (0.0, 0.0, params.tibia_length_mm)),
        "P": apply(tibia, (params.medial_plateau_offset_mm, 0.0, 0.0)),
        "F": apply(frames["scope"], params.scope_tip_mm),
    }
    return frames, points


def marker_frame_specs() -> tuple[FrameSpec, ...]:
    return (
        FrameSpec("H", "femur", "H", "G", ("H", "F3")),
        FrameSpec("G", "femur", "G", "H", ("G", "F4")),
        FrameSpec("M", "tibia", "M", "N", ("M", "T3")),
        FrameSpec("S", "scope", "S", "S2", ("S", "S3")),
    )


def exact_landmarks(params: LegModelParams) -> LandmarkTable:
    """CT landmark vectors as they would be measured with no error.

    Computed at the neutral pose from the marker frames built on the exact
    marker positions; the vectors are rigid so any pose gives the same table.
    """
    frames, points = _forward(params, np.zeros(len(CHANNELS)))
    markers = {}
    for body, pose in ((params.femur_body, frames["femur"]), (params.tibia_body, frames["tibia"]),
                       (params.scope_body, frames["scope"])):
        markers.update(zip(body.labels, apply(pose, body.reference)))
    mframes = {spec.id: spec.build(markers) for spec in marker_frame_specs()}

    def local(point: str, host: Transform) -> np.ndarray:
        return apply(invert(host), points[point])

    entries = [
        Landmark("B", "H", local("B", mframes["H"])),
        Landmark("K", "H", local("K", mframes["H"])),
        Landmark("C", "H", local("C", mframes["H"])),
        Landmark("D", "M", local("D", mframes["M"])),
        Landmark("E", "M", local("E", mframes["M"])),
        Landmark("P", "M", local("P", mframes["M"])),
        Landmark("E", "D", local("E", frames["D"])),
        Landmark("F", "S", local("F", mframes["S"])),
    ]
    return LandmarkTable(tuple(entries), provenance="synthetic leg (exact)", accuracy_mm=CT_ACCURACY_MM)


def session_config(params: LegModelParams, table: LandmarkTable | None = None) -> SessionConfig:
    """Tracking config for the synthetic leg, using ``table`` (exact by default)."""
    return SessionConfig(
        bodies=params.bodies,
        frames=marker_frame_specs(),
        landmarks=exact_landmarks(params) if table is None else table,
        routes={"tibia": ("M",), "cross_joint": ("H", "C", "D")},
        checks=(ConsistencyCheck("E", "tibia", "cross_joint"),),
    ).validate()


def synthesize(
    params: LegModelParams | None = None,
    script: MotionScript | None = None,
    noise: NoiseSpec | None = None,
) -> tuple[MarkerStream, LandmarkTable, Trajectory]:
    """Marker stream, CT landmark table and ground truth for a scripted motion.

    Deterministic for a given ``noise.seed``.  Marker noise, occlusion and
    landmark noise draw from independent child seeds, so changing one
    leaves the others' draws untouched.
    """
    params = (params or LegModelParams()).validate()
    script = script or default_script()
    noise = noise or NoiseSpec()
    frames, points = _forward(params, script.commands)

    labels, bodies, clean = [], [], []
    for body in params.bodies:
        pose = frames[body.id]
        clean.append(apply(pose[:, None], body.reference))
        labels += body.labels
        bodies += [body.id] * len(body.labels)
    positions = np.concatenate(clean, axis=1)

    marker_rng, occlusion_rng, landmark_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(noise.seed).spawn(3)
    )
    if noise.marker_sigma_mm > 0:
        positions = positions + marker_rng.normal(0.0, noise.marker_sigma_mm, positions.shape)
    p = np.array([noise.occlusion_by_label.get(lab, noise.occlusion_prob) for lab in labels])
    visible = occlusion_rng.random(positions.shape[:2]) >= p
    positions = np.where(visible[..., None], positions, np.nan)

    table = exact_landmarks(params)
    if noise.landmark_sigma_mm > 0:
        table = table.perturbed(noise.landmark_sigma_mm, landmark_rng)
        table = LandmarkTable(table.entries, f"synthetic leg (sigma {noise.landmark_sigma_mm} mm)", CT_ACCURACY_MM)

    stream = MarkerStream(script.times, tuple(labels), tuple(bodies), positions, visible)
    return stream, table, Trajectory(params, script, frames, points)


def ground_truth_at(trajectory: Trajectory, t: float) -> tuple[LegAngles, KneeTranslation, dict[str, np.ndarray]]:
    """Commanded angles, knee translation and world points at time ``t``.

    Commands are interpolated linearly in joint space; points come from
    forward kinematics of the interpolated commands.
    """
    times = trajectory.times
    if not times[0] <= t <= times[-1]:
        raise OutOfRange(f"t={t} outside script range [{times[0]}, {times[-1]}]")
    cmd = np.array([np.interp(t, times, col) for col in trajectory.script.commands.T])
    _, points = _forward(trajectory.params, cmd)
    angles = LegAngles(*(float(x) for x in cmd[:6]))
    translation = KneeTranslation(*(float(x) for x in cmd[6:9]))
    return angles, translation, {k: np.asarray(v) for k, v in points.items()}
