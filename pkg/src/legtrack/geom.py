"""Rigid transforms in SE(3).

Conventions: lengths in millimetres, angles in radians internally.  World
frame is Y-up, right-handed, Z running toe-to-head along a supine patient.

Every function broadcasts over leading axes, so a :class:`Transform` may hold
one pose (rotation ``(3, 3)``, translation ``(3,)``) or a stack of poses
(``(..., 3, 3)`` / ``(..., 3)``).  Values are immutable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_DRIFT_TOL = 1e-12
ROTATION_TOL = 1e-9

WORLD_X = np.array([1.0, 0.0, 0.0])
WORLD_Y = np.array([0.0, 1.0, 0.0])
WORLD_Z = np.array([0.0, 0.0, 1.0])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("...i,...i->...", v, v))


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / norm(v)[..., None]


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0), axis=-1)


def orthonormality_drift(r: np.ndarray) -> np.ndarray:
    """Largest absolute entry of ``RᵀR - I`` for each rotation in the stack."""
    rtr = np.swapaxes(r, -1, -2) @ r
    return np.abs(rtr - np.eye(3)).max(axis=(-2, -1))


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Closest proper rotation to ``m`` in the Frobenius sense (polar decomposition)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    d = np.where(d == 0, 1.0, d)
    fix = np.ones(np.shape(m)[:-1])
    fix[..., 2] = d
    return (u * fix[..., None, :]) @ vt


def rot_x(angle: float | np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    o, z = np.ones_like(c), np.zeros_like(c)
    return np.stack(
        (np.stack((o, z, z), -1), np.stack((z, c, -s), -1), np.stack((z, s, c), -1)), -2
    )


def rot_y(angle: float | np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    o, z = np.ones_like(c), np.zeros_like(c)
    return np.stack(
        (np.stack((c, z, s), -1), np.stack((z, o, z), -1), np.stack((-s, z, c), -1)), -2
    )


def rot_z(angle: float | np.ndarray) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    o, z = np.ones_like(c), np.zeros_like(c)
    return np.stack(
        (np.stack((c, -s, z), -1), np.stack((s, c, z), -1), np.stack((z, z, o), -1)), -2
    )


def random_rotation(rng: np.random.Generator, size: int | tuple | None = None) -> np.ndarray:
    """Uniformly distributed rotations (via normalized Gaussian quaternions)."""
    shape = () if size is None else np.atleast_1d(size).tolist()
    q = rng.standard_normal(tuple(shape) + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        (
            np.stack((1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)), -1),
            np.stack((2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)), -1),
            np.stack((2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)), -1),
        ),
        -2,
    )


@dataclass(frozen=True, eq=False)
class Transform:
    """A rigid pose mapping child-frame coordinates into the parent frame.

    ``rotation`` columns are the child axes expressed in the parent frame;
    ``translation`` is the child origin in the parent frame (mm).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rotation)
        t = _frozen(self.translation)
        if r.shape[-2:] != (3, 3) or t.shape[-1:] != (3,) or r.shape[:-2] != t.shape[:-1]:
            raise ValueError(f"incompatible shapes: rotation {r.shape}, translation {t.shape}")
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise ValueError("transform entries must be finite")
        if r.size and (orthonormality_drift(r).max() > ROTATION_TOL):
            raise ValueError("rotation is not orthonormal")
        if r.size and (np.linalg.det(r).min() < 1.0 - ROTATION_TOL):
            raise ValueError("rotation is not proper (det != +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, shape: tuple[int, ...] = ()) -> "Transform":
        return cls(np.broadcast_to(np.eye(3), shape + (3, 3)), np.zeros(shape + (3,)))

    @classmethod
    def from_translation(cls, d) -> "Transform":
        d = np.asarray(d, dtype=float)
        return cls(np.broadcast_to(np.eye(3), d.shape[:-1] + (3, 3)), d)

    @classmethod
    def from_matrix(cls, m, orthonormalize: bool = False) -> "Transform":
        m = np.asarray(m, dtype=float)
        r = m[..., :3, :3]
        if orthonormalize:
            r = nearest_rotation(r)
        return cls(r, m[..., :3, 3])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.translation.shape[:-1]

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("single transform has no length")
        return self.shape[0]

    def __getitem__(self, idx) -> "Transform":
        return Transform(self.rotation[idx], self.translation[idx])

    def matrix(self) -> np.ndarray:
        m = np.zeros(self.shape + (4, 4))
        m[..., :3, :3] = self.rotation
        m[..., :3, 3] = self.translation
        m[..., 3, 3] = 1.0
        return m

    def __matmul__(self, other: "Transform") -> "Transform":
        return compose(self, other)

    def allclose(self, other: "Transform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __repr__(self) -> str:
        if self.shape:
            return f"Transform(shape={self.shape})"
        return f"Transform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: Transform, b: Transform) -> Transform:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    t = np.einsum("...ij,...j->...i", a.rotation, b.translation) + a.translation
    drift = orthonormality_drift(r)
    if np.any(drift > ORTHO_DRIFT_TOL):
        r = np.where((drift > ORTHO_DRIFT_TOL)[..., None, None], nearest_rotation(r), r)
    return Transform(r, t)


def invert(t: Transform) -> Transform:
    rt = np.swapaxes(t.rotation, -1, -2)
    return Transform(rt, -np.einsum("...ij,...j->...i", rt, t.translation))


def apply(t: Transform, p) -> np.ndarray:
    """Map point(s) ``p`` from the child frame of ``t`` into its parent frame."""
    p = np.asarray(p, dtype=float)
    return np.einsum("...ij,...j->...i", t.rotation, p) + t.translation


def rotate(t: Transform, v) -> np.ndarray:
    """Rotate free vector(s) ``v`` (no translation)."""
    return np.einsum("...ij,...j->...i", t.rotation, np.asarray(v, dtype=float))
