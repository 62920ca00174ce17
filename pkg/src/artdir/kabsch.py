"""Least-squares rigid registration of corresponded point sets (Kabsch)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, InsufficientPoints
from .geom import RigidTransform, svd3

SIGMA_MIN = 1e-12


@dataclass(frozen=True)
class Correspondences:
    sources: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sources, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3 or s.shape != t.shape:
            raise ValueError("sources and targets must be equal-length (n, 3) arrays")
        if len(s) == 0:
            raise InsufficientPoints("no correspondences")
        object.__setattr__(self, "sources", s)
        object.__setattr__(self, "targets", t)

    @classmethod
    def from_displacements(cls, points, displacements) -> Correspondences:
        p = np.asarray(points, dtype=float)
        return cls(p, p + np.asarray(displacements, dtype=float))

    def __len__(self):
        return len(self.sources)


def _kabsch_batch(src, dst):
    """Core solver on (k, n, 3) arrays -> (R, t, ok)."""
    ps = src.mean(axis=1, keepdims=True)
    pt = dst.mean(axis=1, keepdims=True)
    h = np.einsum("kni,knj->kij", src - ps, dst - pt)
    u, s, vt = svd3(h)
    ok = s[:, 1] > SIGMA_MIN * s[:, 0]
    v = np.swapaxes(vt, 1, 2)
    # det(v) = +1 and det(u) = +1 by construction of svd3 when s[2] ~ 0;
    # in general fix the reflection through the smallest singular direction
    d = np.sign(np.linalg.det(v) * np.linalg.det(u))
    d[d == 0] = 1.0
    v = v.copy()
    v[:, :, 2] *= d[:, None]
    r = v @ np.swapaxes(u, 1, 2)
    t = pt[:, 0, :] - np.einsum("kij,kj->ki", r, ps[:, 0, :])
    return r, t, ok


def fit_rigid(c: Correspondences) -> RigidTransform:
    """Rigid transform minimizing ``sum |R s_i + t - t_i|^2``; always det(R) = +1.

    Raises:
        InsufficientPoints: fewer than 3 correspondences.
        DegenerateConfiguration: collinear or coincident points (second
            singular value of the cross-covariance below 1e-12 of the first).
    """
    if len(c) < 3:
        raise InsufficientPoints(f"need >= 3 correspondences, got {len(c)}")
    r, t, ok = _kabsch_batch(c.sources[None], c.targets[None])
    if not ok[0]:
        raise DegenerateConfiguration("collinear or coincident correspondences")
    return RigidTransform(r[0], t[0])


def fit_rigid_batch(sources, targets):
    """Fit many same-sized correspondence sets at once.

    ``sources`` and ``targets`` are ``(k, n, 3)``.  Returns ``(rotations,
    translations, ok)``; entries with ``ok == False`` are degenerate and their
    transforms must not be used.
    """
    src = np.asarray(sources, dtype=float)
    dst = np.asarray(targets, dtype=float)
    if src.ndim != 3 or src.shape != dst.shape or src.shape[2] != 3:
        raise ValueError("expected matching (k, n, 3) arrays")
    if src.shape[1] < 3:
        raise InsufficientPoints(f"need >= 3 correspondences, got {src.shape[1]}")
    return _kabsch_batch(src, dst)


def residual(c: Correspondences, T: RigidTransform) -> float:
    """Mean squared registration error in m^2."""
    diff = T.apply(c.sources) - c.targets
    return float(np.mean(np.einsum("ij,ij->i", diff, diff)))
