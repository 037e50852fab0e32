"""Session configuration: bodies, frames, landmark table, routes.

Stored as a single JSON document; the schema ships with the package at
``legtrack/schema/session_config.schema.json``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import numpy as np

from .anatomy import DEFAULT_ANATOMICAL_FRAMES, AnatomicalFrameSpec, Landmark, LandmarkTable
from .errors import ConfigError
from .frames import FrameSpec
from .kinematics import REFERENCE_CONDYLE_ROTATION
from .rigidbody import DEFAULT_REJECT_RMS_MM, RigidBodyDef


def load_schema() -> dict:
    text = resources.files("legtrack").joinpath("schema/session_config.schema.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class ConsistencyCheck:
    point: str
    route_a: str
    route_b: str

    @property
    def name(self) -> str:
        return f"{self.point}:{self.route_a}|{self.route_b}"


@dataclass(frozen=True, eq=False)
class SessionConfig:
    bodies: tuple[RigidBodyDef, ...]
    frames: tuple[FrameSpec, ...]
    landmarks: LandmarkTable
    anatomical_frames: tuple[AnatomicalFrameSpec, ...] = DEFAULT_ANATOMICAL_FRAMES
    routes: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    checks: tuple[ConsistencyCheck, ...] = ()
    reject_rms_mm: float = DEFAULT_REJECT_RMS_MM
    hip_reference_rotation: np.ndarray = field(default_factory=lambda: REFERENCE_CONDYLE_ROTATION.copy())
    scope_tip: str = "F"
    scope_target_frame: str = "C"

    def body(self, body_id: str) -> RigidBodyDef:
        for b in self.bodies:
            if b.id == body_id:
                return b
        raise ConfigError(f"unknown body {body_id!r}")

    def frame_ids(self) -> list[str]:
        return [b.id for b in self.bodies] + [f.id for f in self.frames] + [a.id for a in self.anatomical_frames]

    def issues(self) -> list[str]:
        """Referential-completeness problems; empty when the config is usable."""
        out = []
        ids = self.frame_ids()
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            out.append(f"duplicate frame/body ids: {sorted(dupes)}")
        labels = [lab for b in self.bodies for lab in b.labels]
        if len(set(labels)) != len(labels):
            out.append("marker labels must be unique across bodies")
        bodies = {b.id: b for b in self.bodies}
        for f in self.frames:
            body = bodies.get(f.body)
            if body is None:
                out.append(f"frame {f.id}: unknown body {f.body!r}")
                continue
            missing = [lab for lab in f.labels() if lab not in body.labels]
            if missing:
                out.append(f"frame {f.id}: markers {missing} not on body {f.body}")
        known = {b.id for b in self.bodies} | {f.id for f in self.frames}
        for e in self.landmarks.entries:
            if e.host not in ids:
                out.append(f"landmark {e.point}@{e.host}: unknown host frame")
        for a in self.anatomical_frames:
            for p in a.points:
                hosts = [e.host for e in self.landmarks.entries if e.point == p and e.host in known]
                if not hosts:
                    out.append(f"anatomical frame {a.id}: point {p} has no landmark on an earlier frame")
            known.add(a.id)
        for name, chain in self.routes.items():
            unknown = [c for c in chain if c not in ids]
            if unknown:
                out.append(f"route {name}: unknown frames {unknown}")
        for c in self.checks:
            for r in (c.route_a, c.route_b):
                chain = self.routes.get(r)
                if chain is None:
                    out.append(f"check {c.name}: unknown route {r!r}")
                elif not any(e.point == c.point and e.host == chain[-1] for e in self.landmarks.entries):
                    out.append(f"check {c.name}: point {c.point} not measured from frame {chain[-1]}")
        r = np.asarray(self.hip_reference_rotation, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0:
            out.append("hip_reference_rotation must be a proper rotation matrix")
        return out

    def validate(self) -> "SessionConfig":
        problems = self.issues()
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict[str, Any]:
        def frame_dict(f: FrameSpec):
            d: dict[str, Any] = {"id": f.id, "body": f.body, "origin": f.origin, "toward": f.toward}
            if f.y_hint_markers is not None:
                d["y_hint_markers"] = list(f.y_hint_markers)
            if f.y_hint is not None:
                d["y_hint"] = [float(x) for x in f.y_hint]
            return d

        return {
            "version": 1,
            "bodies": {b.id: {lab: p.tolist() for lab, p in b.markers} for b in self.bodies},
            "frames": [frame_dict(f) for f in self.frames],
            "anatomical_frames": [
                {"id": a.id, "kind": a.kind, "points": list(a.points)} for a in self.anatomical_frames
            ],
            "landmarks": {
                "provenance": self.landmarks.provenance,
                "accuracy_mm": self.landmarks.accuracy_mm,
                "entries": [
                    {"point": e.point, "host": e.host, "vector": e.vector.tolist()} for e in self.landmarks.entries
                ],
            },
            "routes": {k: list(v) for k, v in self.routes.items()},
            "consistency": [{"point": c.point, "route_a": c.route_a, "route_b": c.route_b} for c in self.checks],
            "thresholds": {"reject_rms_mm": self.reject_rms_mm},
            "hip_reference_rotation": np.asarray(self.hip_reference_rotation).tolist(),
            "scope": {"tip": self.scope_tip, "target_frame": self.scope_target_frame},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SessionConfig":
        try:
            jsonschema.validate(data, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        try:
            bodies = tuple(RigidBodyDef.from_markers(k, v) for k, v in data["bodies"].items())
            frames = tuple(
                FrameSpec(
                    f["id"], f["body"], f["origin"], f["toward"],
                    tuple(f["y_hint_markers"]) if "y_hint_markers" in f else None,
                    tuple(f["y_hint"]) if "y_hint" in f else None,
                )
                for f in data["frames"]
            )
            lm = data["landmarks"]
            table = LandmarkTable(
                tuple(Landmark(e["point"], e["host"], e["vector"]) for e in lm["entries"]),
                lm.get("provenance", ""),
                lm.get("accuracy_mm", 0.3),
            )
            anatomical = (
                tuple(AnatomicalFrameSpec(a["id"], a["kind"], tuple(a["points"])) for a in data["anatomical_frames"])
                if "anatomical_frames" in data
                else DEFAULT_ANATOMICAL_FRAMES
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        scope = data.get("scope", {})
        return cls(
            bodies=bodies,
            frames=frames,
            landmarks=table,
            anatomical_frames=anatomical,
            routes={k: tuple(v) for k, v in data.get("routes", {}).items()},
            checks=tuple(ConsistencyCheck(c["point"], c["route_a"], c["route_b"]) for c in data.get("consistency", [])),
            reject_rms_mm=data.get("thresholds", {}).get("reject_rms_mm", DEFAULT_REJECT_RMS_MM),
            hip_reference_rotation=np.array(data.get("hip_reference_rotation", REFERENCE_CONDYLE_ROTATION), dtype=float),
            scope_tip=scope.get("tip", "F"),
            scope_target_frame=scope.get("target_frame", "C"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def load_config(path: str | Path) -> SessionConfig:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return SessionConfig.from_dict(data)
