"""End-to-end tracking: marker stream -> poses -> frames -> angles and consistency.

The stream is processed in fixed-size chunks, each fully vectorised, so the
working set is bounded by the chunk size.  Per-sample failures never abort
the run: they null the affected outputs and leave a flag of the form
``"<what>:<ErrorName>"`` on that sample.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .anatomy import SceneSnapshot, with_anatomical_frames
from .config import SessionConfig
from .errors import DegenerateGeometry, TrackingError
from .frames import condyle_frame, tibia_frame
from .geom import Transform, apply, compose, invert, norm
from .kinematics import (
    GAP_RANGE_MM,
    MIN_BONE_LENGTH_MM,
    _hip_angles_rad,
    _knee_angles_rad,
)
from .rigidbody import OK, MarkerFrameSample, MarkerStream, fit_pose, fit_poses, reconstruct_markers

DEFAULT_CHUNK = 4096
ANGLE_FIELDS = ("hip_flexion", "hip_varus", "hip_roll", "knee_flexion", "knee_varus", "knee_ie")
TRANSLATION_FIELDS = ("medial_lateral", "posterior_anterior", "gap")
_BUILDERS: dict[str, Callable] = {"condyle": condyle_frame, "tibia": tibia_frame}


@dataclass(frozen=True, eq=False)
class TrackResult:
    """Per-sample outputs for a whole stream; NaN marks an absent value."""

    times: np.ndarray
    frames: dict[str, Transform]
    frame_valid: dict[str, np.ndarray]
    fit_status: dict[str, np.ndarray]
    rms_residual: dict[str, np.ndarray]
    angles: np.ndarray  # (N, 6) degrees, ANGLE_FIELDS order
    translation: np.ndarray  # (N, 3) mm
    scope_tip: np.ndarray | None  # (N, 3) mm in the target frame
    consistency: dict[str, np.ndarray]  # check name -> (N,) mm
    flags: list[list[str]]

    def __len__(self) -> int:
        return len(self.times)

    def dropouts(self) -> dict[str, int]:
        return {b: int(np.sum(s != OK)) for b, s in self.fit_status.items()}


@dataclass(frozen=True)
class AngleReportRow:
    t: float
    angles: dict[str, float | None]
    translation: dict[str, float | None]
    rms_residual: dict[str, float | None]
    scope_tip: list[float | None] | None
    consistency: dict[str, float | None]
    flags: list[str]

    def to_dict(self) -> dict[str, Any]:
        d = {
            "t": self.t,
            "angles": self.angles,
            "translation": self.translation,
            "rms_residual": self.rms_residual,
            "consistency": self.consistency,
            "flags": self.flags,
        }
        if self.scope_tip is not None:
            d["scope_tip"] = self.scope_tip
        return d


def _num(x) -> float | None:
    x = float(x)
    return None if math.isnan(x) else x


def _masked_build(fn, points: list[np.ndarray], ok: np.ndarray) -> tuple[Transform, np.ndarray]:
    """Apply a raising frame builder only where ``ok``; failures become invalid samples."""
    n = len(ok)
    rot = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    trans = np.zeros((n, 3))
    valid = ok.copy()
    idx = np.flatnonzero(ok)
    try:
        built = fn(*(p[idx] for p in points))
        rot[idx], trans[idx] = built.rotation, built.translation
    except TrackingError:
        for i in idx:
            try:
                built = fn(*(p[i] for p in points))
                rot[i], trans[i] = built.rotation, built.translation
            except TrackingError:
                valid[i] = False
    return Transform(rot, trans), valid


class _Chunk:
    """Frames, validity and flags for one chunk of samples."""

    def __init__(self, config: SessionConfig, stream: MarkerStream):
        self.config = config
        self.n = n = len(stream)
        self.frames: dict[str, Transform] = {}
        self.valid: dict[str, np.ndarray] = {}
        self.flags: list[list[str]] = [[] for _ in range(n)]
        self.status: dict[str, np.ndarray] = {}
        self.rms: dict[str, np.ndarray] = {}
        self._fit_bodies(stream)
        self._marker_frames()
        self._anatomical_frames()

    def flag(self, mask: np.ndarray, text: str) -> None:
        for i in np.flatnonzero(mask):
            self.flags[i].append(text)

    def _fit_bodies(self, stream: MarkerStream) -> None:
        self.markers: dict[str, np.ndarray] = {}
        for body in self.config.bodies:
            pos, vis = stream.columns(body.labels)
            batch = fit_poses(body, pos, vis, self.config.reject_rms_mm)
            for code in np.unique(batch.status):
                if code != OK:
                    self.flag(batch.status == code, f"{body.id}:{code}")
            self.frames[body.id] = batch.poses
            self.valid[body.id] = batch.valid
            self.status[body.id] = batch.status
            self.rms[body.id] = batch.rms_residual
            recon = apply(batch.poses[:, None], body.reference)
            for j, label in enumerate(body.labels):
                self.markers[label] = recon[:, j]

    def _marker_frames(self) -> None:
        for spec in self.config.frames:
            ok = self.valid[spec.body].copy()
            try:
                self.frames[spec.id] = spec.build(self.markers)
            except TrackingError as exc:
                self.frames[spec.id] = Transform.identity((self.n,))
                self.flag(ok, f"{spec.id}:{exc.code}")
                ok[:] = False
            self.valid[spec.id] = ok

    def point_world(self, point: str, host: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """World position of ``point`` from the first valid host, per sample."""
        out = np.full((self.n, 3), np.nan)
        ok = np.zeros(self.n, dtype=bool)
        for e in self.config.landmarks.entries:
            if e.point != point or e.host not in self.frames or (host is not None and e.host != host):
                continue
            take = self.valid[e.host] & ~ok
            if take.any():
                out[take] = apply(self.frames[e.host][take], e.vector)
                ok |= take
        return out, ok

    def _anatomical_frames(self) -> None:
        for spec in self.config.anatomical_frames:
            pts, oks = zip(*(self.point_world(p) for p in spec.points))
            ok = np.logical_and.reduce(oks)
            frame, valid = _masked_build(_BUILDERS[spec.kind], list(pts), ok)
            self.flag(ok & ~valid, f"{spec.id}:{DegenerateGeometry.__name__}")
            self.frames[spec.id] = frame
            self.valid[spec.id] = valid

    def to_local(self, frame: str, p: np.ndarray) -> np.ndarray:
        return apply(invert(self.frames[frame]), p)

    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        out = np.full((n, 6), np.nan)
        trans = np.full((n, 3), np.nan)
        c_ok, d_ok = self.valid.get("C", np.zeros(n, bool)), self.valid.get("D", np.zeros(n, bool))
        if "C" not in self.frames:
            return out, trans

        # hip
        b, b_ok = self.point_world("B")
        c, cp_ok = self.point_world("C")
        v_f = c - b
        ok = c_ok & b_ok & cp_ok
        short = ok & ~(norm(np.nan_to_num(v_f)) > MIN_BONE_LENGTH_MM)
        self.flag(short, "hip:InvalidBoneVector")
        ok &= ~short
        hip = _hip_angles_rad(np.nan_to_num(v_f), self.frames["C"].rotation, self.config.hip_reference_rotation)
        self.flag(ok & hip[3], "hip:DegenerateProjection")
        ok &= ~hip[3]
        out[ok, :3] = np.degrees(np.stack(hip[:3], axis=1))[ok]

        # knee translation: plateau centre in the condyle frame
        d, dp_ok = self.point_world("D")
        d_c = self.to_local("C", np.nan_to_num(d))
        t_ok = c_ok & dp_ok
        trans[t_ok] = d_c[t_ok]
        gap = trans[:, 2]
        self.flag(t_ok & ~((GAP_RANGE_MM[0] <= gap) & (gap <= GAP_RANGE_MM[1])), "knee:ImplausibleGap")

        # knee rotations
        if "D" in self.frames:
            e, e_ok = self.point_world("E")
            v_t = self.to_local("C", np.nan_to_num(e)) - d_c
            ok = c_ok & d_ok & e_ok & dp_ok
            short = ok & ~(norm(v_t) > MIN_BONE_LENGTH_MM)
            self.flag(short, "knee:InvalidBoneVector")
            ok &= ~short
            rel = compose(invert(self.frames["C"]), self.frames["D"])
            knee = _knee_angles_rad(v_t, rel)
            self.flag(ok & knee[3], "knee:DegenerateProjection")
            ok &= ~knee[3]
            out[ok, 3:] = np.degrees(np.stack(knee[:3], axis=1))[ok]
        return _wrap(out), trans

    def scope_tip(self) -> np.ndarray | None:
        cfg = self.config
        if cfg.scope_tip not in cfg.landmarks.points() or cfg.scope_target_frame not in self.frames:
            return None
        f, ok = self.point_world(cfg.scope_tip)
        ok &= self.valid[cfg.scope_target_frame]
        out = np.full((self.n, 3), np.nan)
        out[ok] = self.to_local(cfg.scope_target_frame, np.nan_to_num(f))[ok]
        return out

    def route_point(self, point: str, route: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
        entry = self.config.landmarks.find(point, route[-1])
        chain = self.frames[route[0]]
        for prev, nxt in zip(route[:-1], route[1:]):
            chain = compose(chain, compose(invert(self.frames[prev]), self.frames[nxt]))
        ok = np.logical_and.reduce([self.valid[f] for f in route])
        return apply(chain, entry.vector), ok

    def consistency(self) -> dict[str, np.ndarray]:
        out = {}
        for check in self.config.checks:
            pa, oka = self.route_point(check.point, self.config.routes[check.route_a])
            pb, okb = self.route_point(check.point, self.config.routes[check.route_b])
            out[check.name] = np.where(oka & okb, norm(pa - pb), np.nan)
        return out


def _wrap(a: np.ndarray) -> np.ndarray:
    w = np.mod(a + 180.0, 360.0) - 180.0
    return np.where(w == -180.0, 180.0, w)


def track(config: SessionConfig, stream: MarkerStream, chunk: int = DEFAULT_CHUNK) -> TrackResult:
    """Run the full pipeline over ``stream`` in chunks of ``chunk`` samples."""
    config.validate()
    parts = []
    for start in range(0, len(stream), chunk):
        c = _Chunk(config, stream.slice(start, min(start + chunk, len(stream))))
        angles, trans = c.angles()
        parts.append((c, angles, trans, c.scope_tip(), c.consistency()))
    return _merge(config, stream.times, parts)


def _merge(config: SessionConfig, times: np.ndarray, parts) -> TrackResult:
    ids = config.frame_ids()
    checks = [c.name for c in config.checks]
    bodies = [b.id for b in config.bodies]
    if not parts:
        empty = Transform.identity((0,))
        return TrackResult(
            times, {i: empty for i in ids}, {i: np.zeros(0, bool) for i in ids},
            {b: np.zeros(0, object) for b in bodies}, {b: np.zeros(0) for b in bodies},
            np.zeros((0, 6)), np.zeros((0, 3)), None, {k: np.zeros(0) for k in checks}, [],
        )
    cat = np.concatenate
    frames = {
        i: Transform(cat([p[0].frames[i].rotation for p in parts]), cat([p[0].frames[i].translation for p in parts]))
        for i in ids
    }
    scope = None if parts[0][3] is None else cat([p[3] for p in parts])
    return TrackResult(
        times=times,
        frames=frames,
        frame_valid={i: cat([p[0].valid[i] for p in parts]) for i in ids},
        fit_status={b: cat([p[0].status[b] for p in parts]) for b in bodies},
        rms_residual={b: cat([p[0].rms[b] for p in parts]) for b in bodies},
        angles=cat([p[1] for p in parts]),
        translation=cat([p[2] for p in parts]),
        scope_tip=scope,
        consistency={k: cat([p[4][k] for p in parts]) for k in checks},
        flags=[f for p in parts for f in p[0].flags],
    )


def snapshot_at(config: SessionConfig, sample: MarkerFrameSample) -> SceneSnapshot:
    """World poses of every configured frame for one sample; raises on any failure."""
    markers, frames = {}, {}
    for body in config.bodies:
        fit = fit_pose(body, sample, config.reject_rms_mm)
        frames[body.id] = fit.pose
        markers.update(reconstruct_markers(body, fit))
    for spec in config.frames:
        frames[spec.id] = spec.build(markers)
    return with_anatomical_frames(SceneSnapshot(sample.t, frames), config.landmarks, config.anatomical_frames)


def report_rows(result: TrackResult) -> list[AngleReportRow]:
    rows = []
    for i, t in enumerate(result.times):
        rows.append(AngleReportRow(
            t=float(t),
            angles={k: _num(v) for k, v in zip(ANGLE_FIELDS, result.angles[i])},
            translation={k: _num(v) for k, v in zip(TRANSLATION_FIELDS, result.translation[i])},
            rms_residual={b: _num(r[i]) for b, r in result.rms_residual.items()},
            scope_tip=None if result.scope_tip is None else [_num(v) for v in result.scope_tip[i]],
            consistency={k: _num(v[i]) for k, v in result.consistency.items()},
            flags=list(result.flags[i]),
        ))
    return rows


def _stats(x: np.ndarray) -> dict[str, Any]:
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return {"count": 0, "mean": None, "max": None}
    return {"count": int(len(x)), "mean": float(np.mean(x)), "max": float(np.max(x))}


def summary(result: TrackResult) -> dict[str, Any]:
    return {
        "samples": len(result),
        "dropouts": result.dropouts(),
        "rms_residual_mm": {b: _stats(r) for b, r in result.rms_residual.items()},
        "angles_valid": {k: int(np.isfinite(result.angles[:, j]).sum()) for j, k in enumerate(ANGLE_FIELDS)},
        "consistency_mm": {k: _stats(v) for k, v in result.consistency.items()},
        "flagged_samples": sum(1 for f in result.flags if f),
    }


def angle_report(result: TrackResult) -> dict[str, Any]:
    return {"summary": summary(result), "rows": [r.to_dict() for r in report_rows(result)]}


def consistency_report(result: TrackResult) -> dict[str, Any]:
    rows = [
        {"t": float(t), **{k: _num(v[i]) for k, v in result.consistency.items()}}
        for i, t in enumerate(result.times)
    ]
    return {"summary": {k: _stats(v) for k, v in result.consistency.items()}, "rows": rows}


def pose_report(result: TrackResult) -> dict[str, Any]:
    rows = []
    for i, t in enumerate(result.times):
        poses = {}
        for b in result.fit_status:
            ok = bool(result.frame_valid[b][i])
            pose = result.frames[b][i]
            poses[b] = {
                "status": str(result.fit_status[b][i]),
                "rotation": pose.rotation.tolist() if ok else None,
                "translation": pose.translation.tolist() if ok else None,
                "rms_residual": _num(result.rms_residual[b][i]),
            }
        rows.append({"t": float(t), "poses": poses, "flags": list(result.flags[i])})
    return {"summary": summary(result), "rows": rows}


def run_pipeline(config: SessionConfig, stream: MarkerStream) -> tuple[dict[str, Any], dict[str, Any]]:
    """Angle report and consistency report for ``stream``."""
    result = track(config, stream)
    return angle_report(result), consistency_report(result)


def dumps(report: Any) -> str:
    """Deterministic JSON (sorted keys, NaN as null)."""
    return json.dumps(report, sort_keys=True, allow_nan=False, separators=(",", ":")) + "\n"
