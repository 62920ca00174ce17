"""Depth-image utilities: neighbour-difference normals and RANSAC scale recovery."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateModel, InsufficientInliers, LengthMismatch


@dataclass(frozen=True)
class DepthImage:
    """Row-major depth in metres; 0 marks invalid pixels."""

    values: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 1:
            raise ValueError("depth image must be a non-empty 2-D array")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("depth values must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def intrinsics(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    def unproject(self) -> np.ndarray:
        """``(H, W, 3)`` camera-frame points (+x right, +y down, +z forward)."""
        z = self.values
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(float)
        return np.stack([(u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z], axis=-1)


def normals_from_depth(img: DepthImage) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit normals from right/below neighbour differences.

    Returns ``(normals, valid)`` with shapes ``(H, W, 3)`` and ``(H, W)``.
    Normals are oriented toward the camera (``n . P < 0``).  The last row and
    column, and pixels with an invalid neighbour, are masked out.
    """
    p = img.unproject()
    z = img.values
    valid = np.zeros(z.shape, dtype=bool)
    valid[:-1, :-1] = (z[:-1, :-1] > 0) & (z[:-1, 1:] > 0) & (z[1:, :-1] > 0)
    right = p[:-1, 1:] - p[:-1, :-1]
    below = p[1:, :-1] - p[:-1, :-1]
    n = np.zeros_like(p)
    n[:-1, :-1] = np.cross(right, below)
    length = np.linalg.norm(n, axis=-1)
    valid &= length > 0
    n[valid] /= length[valid][:, None]
    flip = valid & (np.einsum("...k,...k->...", n, p) > 0)
    n[flip] *= -1.0
    n[~valid] = 0.0
    return n, valid


@dataclass(frozen=True)
class RansacConfig:
    iters: int = 1000
    inlier_tol: float = 0.01  # metres
    min_inliers: int | None = None  # default max(50, 10% of samples)

    def resolved_min_inliers(self, n: int) -> int:
        return self.min_inliers if self.min_inliers is not None else max(50, n // 10)


@dataclass(frozen=True)
class LinearScaleModel:
    """``sensor_disparity = a * est_disparity + b`` fitted on the inlier set."""

    a: float
    b: float
    inlier_mask: np.ndarray
    inlier_rmse: float

    def refine(self, est_disparity) -> tuple[np.ndarray, np.ndarray]:
        """Metric depth ``1 / (a e + b)`` and a mask of pixels where it is defined."""
        e = np.asarray(est_disparity, dtype=float)
        disp = self.a * e + self.b
        ok = disp > 0
        depth = np.zeros_like(disp)
        depth[ok] = 1.0 / disp[ok]
        return depth, ok

    def refine_strict(self, est_disparity) -> np.ndarray:
        depth, ok = self.refine(est_disparity)
        if not np.all(ok):
            raise DegenerateModel(f"{int((~ok).sum())} pixels map to non-positive disparity")
        return depth

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "n_inliers": int(self.inlier_mask.sum()), "inlier_rmse": self.inlier_rmse}


def _lstsq_line(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(a), float(b)


def _inliers(a, b, est, depth, tol):
    disp = a * est + b
    ok = disp > 0
    pred = np.divide(1.0, disp, out=np.full_like(disp, np.inf), where=ok)
    return ok & (np.abs(pred - depth) <= tol)


def ransac_scale(est_disparity, sensor_depth, cfg: RansacConfig | None = None, rng: np.random.Generator | None = None) -> LinearScaleModel:
    """Robustly fit ``1/sensor_depth = a * est_disparity + b``.

    Two-point hypotheses are scored by counting samples whose predicted depth
    lies within ``inlier_tol`` of the sensor depth; the best consensus set is
    refitted by least squares in disparity space, and the inlier mask and
    RMSE are re-evaluated under the refitted model.

    Raises:
        LengthMismatch: inputs differ in length.
        InsufficientInliers: the best consensus is below ``min_inliers``.
    """
    cfg = cfg or RansacConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    est = np.asarray(est_disparity, dtype=float).ravel()
    depth = np.asarray(sensor_depth, dtype=float).ravel()
    if est.shape != depth.shape:
        raise LengthMismatch("estimated and sensor arrays differ in length")
    if np.any(depth <= 0):
        raise ValueError("sensor depths must be positive")
    n = len(est)
    need = cfg.resolved_min_inliers(n)
    if n < max(need, 2):
        raise InsufficientInliers(f"{n} samples, need at least {need}")
    sd = 1.0 / depth

    best = None
    best_count = -1
    pairs = rng.integers(0, n, size=(cfg.iters, 2))
    for i, j in pairs:
        if i == j or est[i] == est[j]:
            continue
        a = (sd[i] - sd[j]) / (est[i] - est[j])
        b = sd[i] - a * est[i]
        mask = _inliers(a, b, est, depth, cfg.inlier_tol)
        c = int(mask.sum())
        if c > best_count:
            best, best_count = mask, c
    if best is None or best_count < need:
        raise InsufficientInliers(f"best consensus {max(best_count, 0)} < {need}")
    a, b = _lstsq_line(est[best], sd[best])
    # re-score under the refit so every reported inlier is within tolerance
    mask = _inliers(a, b, est, depth, cfg.inlier_tol)
    if mask.sum() < need:
        raise InsufficientInliers(f"refit consensus {int(mask.sum())} < {need}")
    pred = 1.0 / (a * est[mask] + b)
    rmse = float(np.sqrt(np.mean((pred - depth[mask]) ** 2)))
    return LinearScaleModel(a, b, mask, rmse)


# ---------------------------------------------------------------------------
# 16-bit PGM (millimetres) with a JSON intrinsics sidecar


def write_pgm16(path, values_mm) -> None:
    v = np.asarray(values_mm)
    if v.ndim != 2:
        raise ValueError("expected a 2-D image")
    data = np.clip(np.rint(v), 0, 65535).astype(">u2")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm16(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw[pos:], dtype=dtype, count=w * h).reshape(h, w).astype(np.int64)


def read_depth(path, intrinsics_path=None) -> DepthImage:
    """Load a millimetre PGM; intrinsics default to ``<path>.json``."""
    ipath = Path(intrinsics_path) if intrinsics_path else Path(str(path) + ".json")
    k = json.loads(ipath.read_text(encoding="utf-8"))
    return DepthImage(read_pgm16(path) / 1000.0, float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]))


def write_depth(img: DepthImage, path) -> None:
    write_pgm16(path, img.values * 1000.0)
    Path(str(path) + ".json").write_text(json.dumps(img.intrinsics(), indent=2) + "\n", encoding="utf-8")
