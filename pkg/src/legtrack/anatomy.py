"""CT landmark tables and point queries across frames and joints.

A landmark is a CT-measured vector from a hosting frame to an anatomical
point.  With every frame pose known in the world, any point can be expressed
in any frame, including frames on the other side of a joint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingFrame, UnknownPoint
from .frames import condyle_frame, tibia_frame
from .geom import Transform, apply, compose, invert, norm

# B hip centre, K neck/shaft junction, C femoral condyle centre, D tibial
# plateau centre, E ankle centre, F arthroscope tip, P medial tibial plateau
# reference; G, H (femur), M (tibia), S (scope) are marker-frame origins.
POINT_IDS = ("B", "K", "C", "D", "E", "F", "P", "G", "H", "M", "S")
CT_ACCURACY_MM = 0.3


@dataclass(frozen=True, eq=False)
class Landmark:
    point: str
    host: str
    vector: np.ndarray

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).reshape(3)
        if not np.isfinite(v).all():
            raise ValueError(f"landmark {self.point}@{self.host} is not finite")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True, eq=False)
class LandmarkTable:
    """Local vectors (mm) from hosting frames to anatomical points.

    A point may be measured from more than one host; ``(point, host)`` pairs
    are unique.  Lookups without an explicit host take the first listed
    entry whose host is available.
    """

    entries: tuple[Landmark, ...]
    provenance: str = ""
    accuracy_mm: float = CT_ACCURACY_MM

    def __post_init__(self):
        entries = tuple(self.entries)
        keys = [(e.point, e.host) for e in entries]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (point, host) landmark entries")
        if not self.accuracy_mm > 0:
            raise ValueError("stated accuracy must be positive")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_vectors(cls, vectors: Mapping[str, tuple[str, Sequence[float]]], **kw) -> "LandmarkTable":
        """Build from ``{point: (host, vector)}``."""
        return cls(tuple(Landmark(p, h, v) for p, (h, v) in vectors.items()), **kw)

    def points(self) -> list[str]:
        return list(dict.fromkeys(e.point for e in self.entries))

    def hosts(self) -> list[str]:
        return list(dict.fromkeys(e.host for e in self.entries))

    def find(self, point: str, host: str | None = None, available: Iterable[str] | None = None) -> Landmark:
        candidates = [e for e in self.entries if e.point == point]
        if not candidates:
            raise UnknownPoint(f"no landmark for point {point!r}")
        if host is not None:
            for e in candidates:
                if e.host == host:
                    return e
            raise UnknownPoint(f"point {point!r} is not measured from frame {host!r}")
        if available is None:
            return candidates[0]
        available = set(available)
        for e in candidates:
            if e.host in available:
                return e
        raise MissingFrame(
            f"point {point!r} needs one of frames {[e.host for e in candidates]}, none present"
        )

    def perturbed(self, sigma_mm: float, rng: np.random.Generator) -> "LandmarkTable":
        """Copy with i.i.d. Gaussian noise (per axis) added to every vector."""
        noise = rng.normal(0.0, sigma_mm, size=(len(self.entries), 3)) if sigma_mm > 0 else np.zeros((len(self.entries), 3))
        return LandmarkTable(
            tuple(Landmark(e.point, e.host, e.vector + n) for e, n in zip(self.entries, noise)),
            self.provenance,
            self.accuracy_mm,
        )


@dataclass(frozen=True, eq=False)
class SceneSnapshot:
    """World-referenced frame poses at one instant (or a stack of instants)."""

    t: float | np.ndarray
    frames: Mapping[str, Transform] = field(default_factory=dict)

    def pose(self, frame_id: str) -> Transform:
        try:
            return self.frames[frame_id]
        except KeyError:
            raise MissingFrame(f"frame {frame_id!r} not in snapshot") from None

    def with_frames(self, extra: Mapping[str, Transform]) -> "SceneSnapshot":
        return SceneSnapshot(self.t, {**self.frames, **extra})

    def moved(self, motion: Transform) -> "SceneSnapshot":
        """Every frame carried by one global rigid motion."""
        return SceneSnapshot(self.t, {k: compose(motion, v) for k, v in self.frames.items()})


def point_in_world(snapshot: SceneSnapshot, table: LandmarkTable, point: str, via: str | None = None) -> np.ndarray:
    entry = table.find(point, via, snapshot.frames)
    return apply(snapshot.pose(entry.host), entry.vector)


def point_in_frame(
    snapshot: SceneSnapshot, table: LandmarkTable, point: str, frame: str, via: str | None = None
) -> np.ndarray:
    entry = table.find(point, via, snapshot.frames)
    return apply(relative_transform(snapshot, entry.host, frame), entry.vector)


def relative_transform(snapshot: SceneSnapshot, from_frame: str, to_frame: str) -> Transform:
    """Pose of ``from_frame`` expressed in ``to_frame``: ``T_to⁻¹ ∘ T_from``."""
    t_from = snapshot.pose(from_frame)
    t_to = snapshot.pose(to_frame)
    if from_frame == to_frame:
        return Transform.identity(t_from.shape)
    return compose(invert(t_to), t_from)


def route_point(snapshot: SceneSnapshot, table: LandmarkTable, point: str, route: Sequence[str]) -> np.ndarray:
    """World position of ``point`` reached through an explicit chain of frames.

    The chain starts at ``route[0]`` (world-referenced) and hops frame to
    frame with relative transforms; the landmark must be measured from the
    last frame.
    """
    if not route:
        raise ValueError("empty route")
    entry = table.find(point, route[-1])
    chain = snapshot.pose(route[0])
    for prev, nxt in zip(route[:-1], route[1:]):
        chain = compose(chain, relative_transform(snapshot, nxt, prev))
    return apply(chain, entry.vector)


def cross_route_error(
    snapshot: SceneSnapshot,
    table: LandmarkTable,
    point: str,
    route_a: Sequence[str],
    route_b: Sequence[str],
) -> np.ndarray:
    """Distance (mm) between two computations of the same point."""
    return norm(route_point(snapshot, table, point, route_a) - route_point(snapshot, table, point, route_b))


def scope_tip_in_frame(
    snapshot: SceneSnapshot, table: LandmarkTable, target_frame: str = "C", tip: str = "F"
) -> np.ndarray:
    """Instrument tip in ``target_frame`` (the femoral condyle frame by default)."""
    return point_in_frame(snapshot, table, tip, target_frame)


@dataclass(frozen=True)
class AnatomicalFrameSpec:
    """A frame derived from three landmark points.

    ``kind`` is ``"condyle"`` (points: hip centre, neck junction, condyle
    centre) or ``"tibia"`` (plateau centre, ankle centre, medial reference).
    """

    id: str
    kind: str
    points: tuple[str, str, str]

    def build(self, snapshot: SceneSnapshot, table: LandmarkTable) -> Transform:
        pts = [point_in_world(snapshot, table, p) for p in self.points]
        if self.kind == "condyle":
            return condyle_frame(*pts)
        if self.kind == "tibia":
            return tibia_frame(*pts)
        raise ValueError(f"unknown anatomical frame kind {self.kind!r}")

    def hosts(self, table: LandmarkTable, available: Iterable[str]) -> list[str]:
        available = list(available)
        return [table.find(p, None, available).host for p in self.points]


DEFAULT_ANATOMICAL_FRAMES = (
    AnatomicalFrameSpec("C", "condyle", ("B", "K", "C")),
    AnatomicalFrameSpec("D", "tibia", ("D", "E", "P")),
)


def with_anatomical_frames(
    snapshot: SceneSnapshot,
    table: LandmarkTable,
    specs: Sequence[AnatomicalFrameSpec] = DEFAULT_ANATOMICAL_FRAMES,
) -> SceneSnapshot:
    """Add derived frames in order; each may use frames added before it."""
    for spec in specs:
        snapshot = snapshot.with_frames({spec.id: spec.build(snapshot, table)})
    return snapshot
