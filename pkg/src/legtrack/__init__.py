"""Optical tracking of the lower leg: rigid-body poses, anatomical frames and joint angles."""
from .anatomy import LandmarkTable, SceneSnapshot, cross_route_error, point_in_frame, point_in_world, route_point
from .config import SessionConfig, load_config
from .errors import TrackingError
from .geom import Transform, apply, compose, invert
from .kinematics import KneeTranslation, LegAngles, hip_angles, knee_angles, knee_translation, leg_angles
from .pipeline import run_pipeline, snapshot_at, track
from .rigidbody import MarkerStream, RigidBodyDef, fit_pose, fit_poses, kabsch
from .simulate import LegModelParams, MotionScript, NoiseSpec, ground_truth_at, synthesize
from .streamio import emit_marker_stream, parse_marker_stream

__all__ = [
    "KneeTranslation", "LandmarkTable", "LegAngles", "LegModelParams", "MarkerStream", "MotionScript",
    "NoiseSpec", "RigidBodyDef", "SceneSnapshot", "SessionConfig", "TrackingError", "Transform",
    "apply", "compose", "cross_route_error", "emit_marker_stream", "fit_pose", "fit_poses", "ground_truth_at",
    "hip_angles", "invert", "kabsch", "knee_angles", "knee_translation", "leg_angles", "load_config",
    "parse_marker_stream", "point_in_frame", "point_in_world", "route_point", "run_pipeline", "snapshot_at",
    "synthesize", "track",
]
