"""Rigid-body pose recovery from labeled markers.

Poses come from the closed-form least-squares (SVD) registration of the
body's reference marker layout onto whichever markers are visible, with a
determinant guard so the result is never a reflection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DegenerateGeometry, FitRejected, InsufficientMarkers
from .geom import Transform, apply

MIN_VISIBLE = 3
MIN_MARKER_SPACING_MM = 5.0
MIN_SPREAD_MM = 1.0
DEFAULT_REJECT_RMS_MM = 1.0


@dataclass(frozen=True, eq=False)
class RigidBodyDef:
    """A rigid body's marker labels and their positions in the body frame (mm)."""

    id: str
    labels: tuple[str, ...]
    reference: np.ndarray

    def __post_init__(self):
        ref = np.array(self.reference, dtype=float)
        labels = tuple(self.labels)
        if ref.shape != (len(labels), 3):
            raise ValueError(f"{self.id}: reference must be ({len(labels)}, 3), got {ref.shape}")
        if len(labels) < 4:
            raise ValueError(f"{self.id}: a rigid body needs at least 4 markers")
        if len(set(labels)) != len(labels):
            raise ValueError(f"{self.id}: duplicate marker labels")
        if not np.isfinite(ref).all():
            raise ValueError(f"{self.id}: reference positions must be finite")
        gaps = np.linalg.norm(ref[:, None] - ref[None], axis=-1)
        gaps[np.diag_indices(len(labels))] = np.inf
        if gaps.min() < MIN_MARKER_SPACING_MM:
            raise ValueError(f"{self.id}: markers closer than {MIN_MARKER_SPACING_MM} mm")
        if _spread(ref) < MIN_SPREAD_MM:
            raise ValueError(f"{self.id}: markers are collinear")
        ref.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "reference", ref)

    @classmethod
    def from_markers(cls, id: str, markers: Mapping[str, Sequence[float]]) -> "RigidBodyDef":
        return cls(id, tuple(markers), np.array([markers[k] for k in markers], dtype=float))

    @property
    def markers(self) -> list[tuple[str, np.ndarray]]:
        return list(zip(self.labels, self.reference))


def _spread(points: np.ndarray) -> float:
    """RMS distance of the points from their principal axis."""
    centred = points - points.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    return float(np.sqrt((s[1:] ** 2).sum() / len(points)))


@dataclass(frozen=True, eq=False)
class MarkerObservation:
    label: str
    position: np.ndarray
    visible: bool
    body: str | None = None


@dataclass(frozen=True, eq=False)
class MarkerFrameSample:
    """One timestamped set of labeled marker observations.

    Stored column-wise; invisible markers have NaN positions.
    """

    t: float
    labels: tuple[str, ...]
    positions: np.ndarray
    visible: np.ndarray
    bodies: tuple[str | None, ...] = ()

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("marker labels must be unique within a sample")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "visible", np.asarray(self.visible, dtype=bool).reshape(-1))
        if not self.bodies:
            object.__setattr__(self, "bodies", (None,) * len(labels))

    @classmethod
    def from_observations(cls, t: float, observations: Sequence[MarkerObservation]) -> "MarkerFrameSample":
        return cls(
            t,
            tuple(o.label for o in observations),
            np.array([o.position for o in observations], dtype=float).reshape(-1, 3),
            np.array([o.visible for o in observations], dtype=bool),
            tuple(o.body for o in observations),
        )

    @property
    def observations(self) -> list[MarkerObservation]:
        return [
            MarkerObservation(lab, pos, bool(vis), body)
            for lab, pos, vis, body in zip(self.labels, self.positions, self.visible, self.bodies)
        ]

    def lookup(self, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Positions ``(n, 3)`` and visibility ``(n,)`` for ``labels``; absent labels are invisible."""
        index = {lab: i for i, lab in enumerate(self.labels)}
        pos = np.full((len(labels), 3), np.nan)
        vis = np.zeros(len(labels), dtype=bool)
        for j, lab in enumerate(labels):
            i = index.get(lab)
            if i is not None:
                pos[j] = self.positions[i]
                vis[j] = self.visible[i]
        vis &= np.isfinite(pos).all(axis=1)
        return pos, vis


@dataclass(frozen=True, eq=False)
class MarkerStream:
    """An ordered stream of samples sharing one label set, stored as arrays.

    ``positions`` is ``(N, n, 3)`` and ``visible`` is ``(N, n)``.  Iterating
    yields :class:`MarkerFrameSample` objects.
    """

    times: np.ndarray
    labels: tuple[str, ...]
    bodies: tuple[str | None, ...]
    positions: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(
            self, "positions", np.asarray(self.positions, dtype=float).reshape(len(times), len(self.labels), 3)
        )
        object.__setattr__(
            self, "visible", np.asarray(self.visible, dtype=bool).reshape(len(times), len(self.labels))
        )

    @classmethod
    def from_samples(cls, samples: Sequence[MarkerFrameSample]) -> "MarkerStream":
        labels: dict[str, str | None] = {}
        for s in samples:
            for lab, body in zip(s.labels, s.bodies):
                if labels.get(lab) is None:
                    labels[lab] = body
        order = tuple(labels)
        pos = np.full((len(samples), len(order), 3), np.nan)
        vis = np.zeros((len(samples), len(order)), dtype=bool)
        for i, s in enumerate(samples):
            pos[i], vis[i] = s.lookup(order)
        return cls(np.array([s.t for s in samples]), order, tuple(labels[k] for k in order), pos, vis)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> MarkerFrameSample:
        return MarkerFrameSample(
            float(self.times[i]), self.labels, self.positions[i], self.visible[i], self.bodies
        )

    def __iter__(self) -> Iterator[MarkerFrameSample]:
        return (self[i] for i in range(len(self)))

    def slice(self, start: int, stop: int) -> "MarkerStream":
        return MarkerStream(
            self.times[start:stop], self.labels, self.bodies,
            self.positions[start:stop], self.visible[start:stop],
        )

    def columns(self, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """``(N, k, 3)`` positions and ``(N, k)`` visibility for ``labels``."""
        index = {lab: i for i, lab in enumerate(self.labels)}
        n = len(self)
        pos = np.full((n, len(labels), 3), np.nan)
        vis = np.zeros((n, len(labels)), dtype=bool)
        for j, lab in enumerate(labels):
            i = index.get(lab)
            if i is not None:
                pos[:, j] = self.positions[:, i]
                vis[:, j] = self.visible[:, i]
        vis &= np.isfinite(pos).all(axis=-1)
        return pos, vis


@dataclass(frozen=True, eq=False)
class PoseFit:
    body_id: str
    pose: Transform
    rms_residual: float
    used_marker_count: int


def kabsch(reference, observed, weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation and translation taking ``reference`` onto ``observed``.

    Both are ``(..., n, 3)``; ``weights`` is ``(..., n)`` (zero drops a
    marker).  Returns ``R (..., 3, 3)`` and ``t (..., 3)`` such that
    ``R @ reference_i + t`` best matches ``observed_i``.  If the SVD solution
    is a reflection, the sign of the weakest singular direction is flipped.
    """
    a = np.asarray(reference, dtype=float)
    b = np.asarray(observed, dtype=float)
    if weights is None:
        w = np.ones(np.broadcast_shapes(a.shape, b.shape)[:-1])
    else:
        w = np.asarray(weights, dtype=float)
    b = np.where(w[..., None] > 0, b, 0.0)
    wsum = w.sum(axis=-1)[..., None]
    ca = (w[..., None] * a).sum(axis=-2) / wsum
    cb = (w[..., None] * b).sum(axis=-2) / wsum
    h = np.einsum("...ni,...nj->...ij", w[..., None] * (a - ca[..., None, :]), b - cb[..., None, :])
    u, _, vt = np.linalg.svd(h)
    v = np.swapaxes(vt, -1, -2)
    ut = np.swapaxes(u, -1, -2)
    d = np.sign(np.linalg.det(v @ ut))
    d = np.where(d == 0, 1.0, d)
    v = v.copy()
    v[..., :, 2] *= d[..., None]
    r = v @ ut
    t = cb - np.einsum("...ij,...j->...i", r, ca)
    return r, t


def _residual_rms(r, t, a, b, w) -> np.ndarray:
    pred = np.einsum("...ij,...nj->...ni", r, a) + t[..., None, :]
    diff = np.where(w[..., None] > 0, pred - np.where(w[..., None] > 0, b, 0.0), 0.0)
    return np.sqrt((diff**2).sum(axis=(-2, -1)) / w.sum(axis=-1))


def fit_pose(
    body: RigidBodyDef, sample: MarkerFrameSample, reject_rms_mm: float = DEFAULT_REJECT_RMS_MM
) -> PoseFit:
    """Body-to-world pose from the visible markers of ``body`` in ``sample``."""
    pos, vis = sample.lookup(body.labels)
    n = int(vis.sum())
    if n < MIN_VISIBLE:
        raise InsufficientMarkers(f"{body.id}: {n} visible markers, need {MIN_VISIBLE}")
    ref = body.reference[vis]
    if _spread(ref) < MIN_SPREAD_MM:
        raise DegenerateGeometry(f"{body.id}: visible markers are collinear")
    r, t = kabsch(ref, pos[vis])
    rms = float(_residual_rms(r, t, ref, pos[vis], np.ones(n)))
    if rms > reject_rms_mm:
        raise FitRejected(f"{body.id}: rms residual {rms:.3f} mm exceeds {reject_rms_mm} mm", rms)
    return PoseFit(body.id, Transform(r, t), rms, n)


def reconstruct_markers(body: RigidBodyDef, fit: PoseFit) -> list[tuple[str, np.ndarray]]:
    """World positions of every marker of ``body``, occluded ones included."""
    return list(zip(body.labels, apply(fit.pose, body.reference)))


OK = "ok"


@dataclass(frozen=True, eq=False)
class PoseFitBatch:
    """Fits for a run of samples.  Failed samples hold identity poses and NaN rms."""

    body_id: str
    poses: Transform
    rms_residual: np.ndarray
    used_marker_count: np.ndarray
    status: np.ndarray = field(repr=False)

    @property
    def valid(self) -> np.ndarray:
        return self.status == OK

    def __getitem__(self, i: int) -> PoseFit:
        if self.status[i] != OK:
            raise ValueError(f"sample {i} has no fit: {self.status[i]}")
        return PoseFit(self.body_id, self.poses[i], float(self.rms_residual[i]), int(self.used_marker_count[i]))


def fit_poses(
    body: RigidBodyDef,
    positions: np.ndarray,
    visible: np.ndarray,
    reject_rms_mm: float = DEFAULT_REJECT_RMS_MM,
) -> PoseFitBatch:
    """Vectorised :func:`fit_pose` over ``positions (N, n, 3)`` in ``body.labels`` order.

    Per-sample failures are reported in ``status`` instead of raising.
    """
    positions = np.asarray(positions, dtype=float)
    vis = np.asarray(visible, dtype=bool) & np.isfinite(positions).all(axis=-1)
    n_samples = len(positions)
    counts = vis.sum(axis=1)
    status = np.full(n_samples, OK, dtype=object)
    status[counts < MIN_VISIBLE] = InsufficientMarkers.__name__
    patterns, inverse = np.unique(vis, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pattern in enumerate(patterns):
        if pattern.sum() >= MIN_VISIBLE and _spread(body.reference[pattern]) < MIN_SPREAD_MM:
            status[inverse == k] = DegenerateGeometry.__name__
    usable = status == OK
    w = np.where(usable[:, None], vis, True).astype(float)
    ref = np.broadcast_to(body.reference, positions.shape)
    obs = np.where(usable[:, None, None], positions, ref)
    r, t = kabsch(ref, obs, w)
    rms = _residual_rms(r, t, ref, obs, w)
    status[usable & (rms > reject_rms_mm)] = FitRejected.__name__
    good = status == OK
    r = np.where(good[:, None, None], r, np.eye(3))
    t = np.where(good[:, None], t, 0.0)
    rms = np.where(np.isin(status, [OK, FitRejected.__name__]), rms, np.nan)
    return PoseFitBatch(body.id, Transform(r, t), rms, counts, status)
