"""Rigid transforms, directions and small 3x3 linear algebra.

Vectors are plain ``float64`` numpy arrays of shape ``(3,)`` (or ``(n, 3)``
for batches).  Camera-frame convention: +x right, +y down, +z away from the
camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDisplacement

EPS_DIR = 1e-9
ORTHO_TOL = 1e-9


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite vector component")
    return a


def normalize(v, eps: float = 0.0) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n <= eps):
        raise ValueError("cannot normalize a zero-length vector")
    return v / n


def unit_vec(v) -> np.ndarray:
    """Validate ``v`` as a unit vector (norm within 1e-9 of one)."""
    a = as_vec3(v)
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ValueError(f"not a unit vector: norm {np.linalg.norm(a)!r}")
    return a


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of ``angle`` about ``axis``."""
    a = normalize(axis)
    k = skew(a)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rot_x(angle: float) -> np.ndarray:
    return axis_angle((1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> np.ndarray:
    return axis_angle((0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> np.ndarray:
    return axis_angle((0.0, 0.0, 1.0), angle)


def rotation_angle(rotation) -> float:
    """Angle of a rotation matrix, robust near 0 and pi."""
    r = np.asarray(rotation, dtype=float)
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return float(np.arctan2(0.5 * np.linalg.norm(w), 0.5 * (np.trace(r) - 1.0)))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (via a random unit quaternion)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def svd3(a, tol: float = 1e-15, max_sweeps: int = 40):
    """Singular value decomposition of one or many 3x3 matrices.

    One-sided (Hestenes) Jacobi on the columns, vectorized over any leading
    batch dimensions.  Returns ``u, s, vt`` with ``s`` sorted descending and
    ``a = u @ diag(s) @ vt``.  ``v`` is always a product of plane rotations,
    so ``det(vt) == +1``.  When ``s[2]`` vanishes the last column of ``u``
    is completed as ``u0 x u1``.
    """
    a = np.array(a, dtype=float)
    single = a.ndim == 2
    if single:
        a = a[None]
    w = a.copy()
    v = np.broadcast_to(np.eye(3), a.shape).copy()
    for _ in range(max_sweeps):
        rotated = False
        for i, j in ((0, 1), (0, 2), (1, 2)):
            wi = w[..., :, i]
            wj = w[..., :, j]
            alpha = np.einsum("...k,...k->...", wi, wi)
            beta = np.einsum("...k,...k->...", wj, wj)
            gamma = np.einsum("...k,...k->...", wi, wj)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            rotated = True
            g = np.where(active, gamma, 1.0)
            # |zeta| -> inf gives t = 0, the correct no-rotation limit
            with np.errstate(over="ignore"):
                zeta = (beta - alpha) / (2.0 * g)
                sgn = np.where(zeta >= 0.0, 1.0, -1.0)
                t = sgn / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(active, c * t, 0.0)
            c = c[..., None]
            s = s[..., None]
            for m in (w, v):
                mi = m[..., :, i].copy()
                mj = m[..., :, j]
                m[..., :, i] = c * mi - s * mj
                m[..., :, j] = s * mi + c * mj
        if not rotated:
            break

    sig = np.linalg.norm(w, axis=-2)
    order = np.argsort(-sig, axis=-1, kind="stable")
    sig = np.take_along_axis(sig, order, axis=-1)
    w = np.take_along_axis(w, order[..., None, :], axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    # reordering columns may flip det(v); restore a proper rotation
    flip = np.linalg.det(v) < 0
    v[flip, :, 2] *= -1.0
    w[flip, :, 2] *= -1.0

    u = np.zeros_like(w)
    top = np.where(sig[..., :1] > 0, sig[..., :1], 1.0)
    for k in range(2):
        ok = sig[..., k] > 1e-300
        u[..., :, k] = np.where(ok[..., None], w[..., :, k] / np.where(ok, sig[..., k], 1.0)[..., None], 0.0)
    # rank <= 1 columns: complete with any orthonormal vector
    bad1 = sig[..., 1] <= 1e-14 * top[..., 0]
    if np.any(bad1):
        u0 = u[bad1, :, 0]
        u0 = np.where(np.linalg.norm(u0, axis=-1, keepdims=True) > 0, u0, np.array([1.0, 0.0, 0.0]))
        helper = np.where(np.abs(u0[..., :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        u1 = np.cross(u0, helper)
        u[bad1, :, 0] = u0
        u[bad1, :, 1] = u1 / np.linalg.norm(u1, axis=-1, keepdims=True)
    u[..., :, 2] = np.cross(u[..., :, 0], u[..., :, 1])
    # keep a = u s vt exact when s[2] is resolvable: sign of the third column
    s2_ok = sig[..., 2] > 1e-8 * top[..., 0]
    sign = np.sign(np.einsum("...k,...k->...", u[..., :, 2], w[..., :, 2]))
    sign = np.where(s2_ok & (sign < 0), -1.0, 1.0)
    u[..., :, 2] *= sign[..., None]
    vt = np.swapaxes(v, -1, -2)
    if single:
        return u[0], sig[0], vt[0]
    return u, sig, vt


def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (Frobenius-nearest proper rotation)."""
    u, _, vt = svd3(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ vt


@dataclass(frozen=True)
class RigidTransform:
    """x -> rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite transform")
        drift = np.abs(r.T @ r - np.eye(3)).max()
        if drift > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            if drift > 1e-3 or np.linalg.det(r) < 0:
                raise ValueError("rotation is not a proper orthonormal matrix")
            r = nearest_rotation(r)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(np.eye(3), t)

    @classmethod
    def about_axis(cls, axis, point, angle: float, slide: float = 0.0) -> RigidTransform:
        """Rotation by ``angle`` about the line (point, axis), then ``slide`` along it."""
        a = normalize(axis)
        r = axis_angle(a, angle)
        c = np.asarray(point, dtype=float)
        return cls(r, c - r @ c + slide * a)

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self ∘ other`` (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> RigidTransform:
        return cls(np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))


def apply_transform(T: RigidTransform, p) -> np.ndarray:
    return T.apply(p)


def angle_between(u, v) -> float:
    """Angle in [0, pi] between two unit vectors (dot product clamped)."""
    c = float(np.dot(u, v))
    return float(np.arccos(min(1.0, max(-1.0, c))))


def angles_between(u, v) -> np.ndarray:
    """Row-wise :func:`angle_between` for ``(n, 3)`` arrays."""
    c = np.einsum("...k,...k->...", u, v)
    return np.arccos(np.clip(c, -1.0, 1.0))


def direction_from_transform(T: RigidTransform, g, eps: float = EPS_DIR) -> np.ndarray:
    """Unit direction in which point ``g`` moves under ``T``: normalized ``(R - I) g + t``.

    Raises:
        DegenerateDisplacement: if the displacement norm is ``<= eps``.
    """
    g = np.asarray(g, dtype=float)
    disp = T.rotation @ g - g + T.translation
    n = np.linalg.norm(disp)
    if not n > eps:
        raise DegenerateDisplacement(f"displacement norm {n:.3g} m at the evaluation point")
    return disp / n


def directions_from_transforms(rotations, translations, g, eps: float = EPS_DIR):
    """Batched :func:`direction_from_transform`; returns (dirs, ok mask)."""
    g = np.asarray(g, dtype=float)
    disp = np.einsum("kij,j->ki", rotations, g) - g + translations
    n = np.linalg.norm(disp, axis=1)
    ok = n > eps
    dirs = np.zeros_like(disp)
    dirs[ok] = disp[ok] / n[ok, None]
    return dirs, ok
