"""Parametric articulated scenes and displacement-field oracles.

A scene is a cuboid cabinet body (fixed), a cuboid panel (movable part 1)
and a bar handle mounted on the panel (holdable region 1).  Surfaces facing
the camera are sampled uniformly and expressed in the camera frame.  The
joint moving the panel is revolute, prismatic or screw.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyScene, NoComparablePoints
from .geom import RigidTransform, normalize

JOINT_KINDS = ("revolute", "prismatic", "screw")
DEFAULT_DELTA = 2e-5
SCENE_HEADER = ["x", "y", "z", "r", "g", "b", "nx", "ny", "nz", "m", "h"]
FIELD_HEADER = ["qx", "qy", "qz", "valid"]

BODY_COLOR = (180, 180, 180)
PANEL_COLOR = (150, 110, 70)
HANDLE_COLOR = (60, 60, 60)


@dataclass(frozen=True)
class JointModel:
    kind: str
    axis_direction: np.ndarray
    axis_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pitch: float = 0.0  # m/rad, screw only

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"unknown joint kind {self.kind!r}")
        a = np.asarray(self.axis_direction, dtype=float)
        if a.shape != (3,) or abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ValueError("axis_direction must be a unit 3-vector")
        if not math.isfinite(self.pitch):
            raise ValueError("pitch must be finite")
        object.__setattr__(self, "axis_direction", a)
        object.__setattr__(self, "axis_point", np.asarray(self.axis_point, dtype=float))
        object.__setattr__(self, "pitch", float(self.pitch))

    def transform(self, q: float) -> RigidTransform:
        """Rigid motion of the moving part at joint coordinate ``q`` (rad or m)."""
        if self.kind == "prismatic":
            return RigidTransform.from_translation(q * self.axis_direction)
        slide = self.pitch * q if self.kind == "screw" else 0.0
        return RigidTransform.about_axis(self.axis_direction, self.axis_point, q, slide)

    def velocity(self, p) -> np.ndarray:
        """Instantaneous velocity of point(s) ``p`` per unit joint rate."""
        p = np.asarray(p, dtype=float)
        a = self.axis_direction
        if self.kind == "prismatic":
            return np.broadcast_to(a, p.shape).copy()
        v = np.cross(a, p - self.axis_point)
        if self.kind == "screw":
            v = v + self.pitch * a
        return v

    def tangent(self, g) -> np.ndarray:
        """Unit direction of motion of point ``g`` at the current configuration."""
        return normalize(self.velocity(g))

    def moved(self, T: RigidTransform) -> JointModel:
        """The same joint expressed in a frame related by ``T``."""
        return replace(self, axis_direction=T.rotation @ self.axis_direction, axis_point=T.apply(self.axis_point))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "axis_direction": self.axis_direction.tolist(),
            "axis_point": self.axis_point.tolist(),
            "pitch": self.pitch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointModel:
        return cls(d["kind"], normalize(np.asarray(d["axis_direction"], dtype=float)), np.asarray(d.get("axis_point", [0, 0, 0]), dtype=float), float(d.get("pitch", 0.0)))


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> RigidTransform:
    """Object-to-camera transform for a camera at ``eye`` looking at ``target``.

    Camera axes: +x right, +y down, +z forward.
    """
    eye = np.asarray(eye, dtype=float)
    f = normalize(np.asarray(target, dtype=float) - eye)
    right = normalize(np.cross(f, np.asarray(up, dtype=float)))
    down = np.cross(f, right)
    r = np.vstack([right, down, f])
    return RigidTransform(r, -r @ eye)


@dataclass(frozen=True)
class SceneSpec:
    """Cabinet geometry in the object frame (x right, y up, z out of the front).

    The body occupies ``x in [-W/2, W/2], y in [0, H], z in [-D, 0]``.  The
    panel sits on the front face, centred at ``panel_center`` (x, y), with
    thickness ``panel_size[2]``.  The handle is a box on the panel front,
    offset by ``handle_offset`` (x, y) from the panel centre.  The joint is
    given in the object frame; ``camera`` maps object to camera coordinates.
    """

    body_size: tuple = (0.6, 0.9, 0.45)
    panel_size: tuple = (0.56, 0.86, 0.02)
    panel_center: tuple = (0.0, 0.45)
    handle_size: tuple = (0.04, 0.25, 0.03)
    handle_offset: tuple = (0.2, 0.0)
    joint: JointModel = field(default_factory=lambda: JointModel("revolute", np.array([0.0, -1.0, 0.0]), np.array([-0.28, 0.0, 0.0])))
    density: float = 1e4
    camera: RigidTransform = field(default_factory=lambda: look_at((0.55, 0.95, 1.5), (0.0, 0.45, 0.0)))

    def __post_init__(self):
        for name in ("body_size", "panel_size", "handle_size"):
            v = getattr(self, name)
            if len(v) != 3 or min(v) <= 0:
                raise ValueError(f"{name} must be three positive lengths")
        if not self.density > 0:
            raise ValueError("density must be positive")

    def boxes(self):
        """(lo, hi, movable, holdable, color) for body, panel and handle."""
        bw, bh, bd = self.body_size
        pw, ph, pt = self.panel_size
        hw, hh, hd = self.handle_size
        px, py = self.panel_center
        hx, hy = px + self.handle_offset[0], py + self.handle_offset[1]
        return [
            (np.array([-bw / 2, 0.0, -bd]), np.array([bw / 2, bh, 0.0]), 0, 0, BODY_COLOR),
            (np.array([px - pw / 2, py - ph / 2, 0.0]), np.array([px + pw / 2, py + ph / 2, pt]), 1, 0, PANEL_COLOR),
            (np.array([hx - hw / 2, hy - hh / 2, pt]), np.array([hx + hw / 2, hy + hh / 2, pt + hd]), 1, 1, HANDLE_COLOR),
        ]

    def to_dict(self) -> dict:
        return {
            "body_size": list(self.body_size),
            "panel_size": list(self.panel_size),
            "panel_center": list(self.panel_center),
            "handle_size": list(self.handle_size),
            "handle_offset": list(self.handle_offset),
            "joint": self.joint.to_dict(),
            "density": self.density,
            "camera": self.camera.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        kw = {k: tuple(d[k]) for k in ("body_size", "panel_size", "panel_center", "handle_size", "handle_offset") if k in d}
        if "joint" in d:
            kw["joint"] = JointModel.from_dict(d["joint"])
        if "density" in d:
            kw["density"] = float(d["density"])
        if "camera" in d:
            kw["camera"] = RigidTransform.from_dict(d["camera"])
        return cls(**kw)


def door_spec(hinge: str = "left", pitch: float = 0.0, **kw) -> SceneSpec:
    """Side-hinged door; ``pitch != 0`` gives a screw joint on the same axis."""
    base = SceneSpec(**kw)
    pw = base.panel_size[0]
    px = base.panel_center[0]
    hw = base.handle_size[0]
    edge = pw / 2 - 0.03 - hw / 2
    if hinge == "left":
        axis, x0, hx = np.array([0.0, -1.0, 0.0]), px - pw / 2, edge
    else:
        axis, x0, hx = np.array([0.0, 1.0, 0.0]), px + pw / 2, -edge
    kind = "screw" if pitch else "revolute"
    joint = JointModel(kind, axis, np.array([x0, 0.0, 0.0]), pitch)
    if "handle_offset" not in kw:
        base = replace(base, handle_offset=(hx, 0.0))
    return replace(base, joint=joint)


def drawer_spec(**kw) -> SceneSpec:
    kw.setdefault("panel_size", (0.56, 0.3, 0.02))
    kw.setdefault("panel_center", (0.0, 0.7))
    kw.setdefault("handle_size", (0.25, 0.04, 0.03))
    kw.setdefault("handle_offset", (0.0, 0.05))
    kw.setdefault("joint", JointModel("prismatic", np.array([0.0, 0.0, 1.0])))
    return SceneSpec(**kw)


def random_spec(kind: str, rng: np.random.Generator, density: float = 1e4) -> SceneSpec:
    """Randomized cabinet of the given joint kind, seen from a random viewpoint."""
    bw = rng.uniform(0.45, 0.8)
    bh = rng.uniform(0.5, 1.0)
    bd = rng.uniform(0.35, 0.55)
    if kind == "prismatic":
        ph = rng.uniform(0.2, 0.35)
        spec = drawer_spec(
            body_size=(bw, bh, bd),
            panel_size=(bw - 0.04, ph, 0.02),
            panel_center=(0.0, bh - ph / 2 - 0.03),
            handle_size=(rng.uniform(0.2, 0.3), 0.04, 0.03),
            handle_offset=(0.0, rng.uniform(-0.03, 0.03)),
            density=density,
        )
    else:
        hinge = "left" if rng.random() < 0.5 else "right"
        pitch = 0.0
        if kind == "screw":
            pitch = rng.choice([-1.0, 1.0]) * rng.uniform(0.02, 0.1)
        spec = door_spec(
            hinge,
            pitch,
            body_size=(bw, bh, bd),
            panel_size=(bw - 0.04, bh - 0.04, 0.02),
            panel_center=(0.0, bh / 2),
            handle_size=(0.04, rng.uniform(0.2, min(0.3, bh - 0.15)), 0.03),
            density=density,
        )
    yaw = rng.uniform(-0.6, 0.6)
    elev = rng.uniform(0.15, 0.5)
    dist = rng.uniform(1.2, 2.0)
    target = np.array([spec.panel_center[0], spec.panel_center[1], 0.0])
    eye = target + dist * np.array([np.sin(yaw) * np.cos(elev), np.sin(elev), np.cos(yaw) * np.cos(elev)])
    return replace(spec, camera=look_at(eye, target))


@dataclass(frozen=True)
class Scene:
    """Attributed point cloud in the camera frame plus joint ground truth.

    ``movable`` / ``holdable`` hold the per-point part ids ``m`` / ``h``.
    """

    positions: np.ndarray
    colors: np.ndarray
    normals: np.ndarray
    movable: np.ndarray
    holdable: np.ndarray
    joint_truth: JointModel | None = None

    def __post_init__(self):
        n = len(self.positions)
        arrays = {
            "positions": np.asarray(self.positions, dtype=float).reshape(n, 3),
            "colors": np.asarray(self.colors, dtype=np.uint8).reshape(n, 3),
            "normals": np.asarray(self.normals, dtype=float).reshape(n, 3),
            "movable": np.asarray(self.movable, dtype=np.int64).reshape(n),
            "holdable": np.asarray(self.holdable, dtype=np.int64).reshape(n),
        }
        if np.any(arrays["movable"] < 0) or np.any(arrays["holdable"] < 0):
            raise ValueError("part ids must be non-negative")
        if np.any((arrays["holdable"] > 0) & (arrays["movable"] == 0)):
            raise ValueError("holdable points must belong to a movable part")
        if n and np.abs(np.linalg.norm(arrays["normals"], axis=1) - 1.0).max() > 1e-6:
            raise ValueError("normals must have unit length")
        for k, v in arrays.items():
            v.flags.writeable = False
            object.__setattr__(self, k, v)

    def __len__(self):
        return len(self.positions)

    def part_ids(self) -> list[int]:
        return sorted(int(m) for m in np.unique(self.movable) if m > 0)

    def truth_direction(self, g) -> np.ndarray:
        """Analytic interaction direction at ``g``: the instantaneous joint velocity."""
        if self.joint_truth is None:
            raise ValueError("scene carries no joint ground truth")
        return self.joint_truth.tangent(g)

    def transformed(self, T: RigidTransform) -> Scene:
        return Scene(
            T.apply(self.positions),
            self.colors,
            self.normals @ T.rotation.T,
            self.movable,
            self.holdable,
            None if self.joint_truth is None else self.joint_truth.moved(T),
        )


def _sample_box_faces(lo, hi, density, rng, eye):
    pts, nrm = [], []
    size = hi - lo
    for axis in range(3):
        u, v = [k for k in range(3) if k != axis]
        area = size[u] * size[v]
        count = int(round(area * density))
        for side, coord in ((-1.0, lo[axis]), (1.0, hi[axis])):
            # back-face culling against the camera centre
            if side * (eye[axis] - coord) <= 0 or count == 0:
                continue
            p = np.empty((count, 3))
            p[:, axis] = coord
            p[:, u] = lo[u] + rng.random(count) * size[u]
            p[:, v] = lo[v] + rng.random(count) * size[v]
            n = np.zeros((count, 3))
            n[:, axis] = side
            pts.append(p)
            nrm.append(n)
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.vstack(pts), np.vstack(nrm)


def generate_scene(spec: SceneSpec, rng: np.random.Generator, min_movable: int = 100) -> Scene:
    """Sample a partial-view attributed point cloud of ``spec``.

    Raises:
        EmptyScene: fewer than ``min_movable`` movable points were produced.
    """
    eye = spec.camera.inverse().translation
    boxes = spec.boxes()
    chunks = []
    for idx, (lo, hi, m, h, color) in enumerate(boxes):
        p, n = _sample_box_faces(lo, hi, spec.density, rng, eye)
        keep = np.ones(len(p), dtype=bool)
        # drop faces in contact with (or buried inside) another box
        for jdx, (lo2, hi2, *_rest) in enumerate(boxes):
            if jdx != idx:
                inside = np.all((p >= lo2 - 1e-9) & (p <= hi2 + 1e-9), axis=1)
                keep &= ~inside
        p, n = p[keep], n[keep]
        chunks.append((p, n, np.full(len(p), m), np.full(len(p), h), np.tile(color, (len(p), 1))))
    pos = np.vstack([c[0] for c in chunks])
    nrm = np.vstack([c[1] for c in chunks])
    movable = np.concatenate([c[2] for c in chunks])
    holdable = np.concatenate([c[3] for c in chunks])
    colors = np.vstack([c[4] for c in chunks])
    if np.count_nonzero(movable) < min_movable:
        raise EmptyScene(f"only {np.count_nonzero(movable)} movable points; raise the density")
    if np.count_nonzero(holdable) == 0:
        raise EmptyScene("handle is not visible from the camera")
    cam = spec.camera
    return Scene(cam.apply(pos), colors, nrm @ cam.rotation.T, movable, holdable, spec.joint.moved(cam))


@dataclass(frozen=True)
class DisplacementField:
    """Per-point displacement vectors, index-aligned with a scene.

    ``valid`` marks entries usable downstream (dropout clears it);
    ``outliers`` records entries replaced by :func:`corrupt`.
    """

    vectors: np.ndarray
    delta: float = DEFAULT_DELTA
    valid: np.ndarray | None = None
    outliers: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float).reshape(-1, 3)
        n = len(v)
        valid = np.ones(n, dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        out = np.zeros(n, dtype=bool) if self.outliers is None else np.asarray(self.outliers, dtype=bool)
        if valid.shape != (n,) or out.shape != (n,):
            raise ValueError("mask length does not match the field")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "outliers", out)

    def __len__(self):
        return len(self.vectors)

    def transformed(self, T: RigidTransform) -> DisplacementField:
        return replace(self, vectors=self.vectors @ T.rotation.T)


def ground_truth_field(scene: Scene, delta: float = DEFAULT_DELTA) -> DisplacementField:
    """Displacements ``T(delta) p - p`` of movable points under the true joint."""
    if delta == 0:
        raise ValueError("delta must be non-zero")
    T = scene.joint_truth.transform(delta)
    q = np.zeros_like(scene.positions)
    mov = scene.movable > 0
    q[mov] = T.apply(scene.positions[mov]) - scene.positions[mov]
    return DisplacementField(q, delta)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_dir: float = 0.0  # rad
    sigma_mag: float = 0.0  # relative
    outlier_fraction: float = 0.0
    dropout_fraction: float = 0.0

    def __post_init__(self):
        if self.sigma_dir < 0 or self.sigma_mag < 0:
            raise ValueError("noise scales must be non-negative")
        for name in ("outlier_fraction", "dropout_fraction"):
            f = getattr(self, name)
            if not 0.0 <= f < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {"sigma_dir": self.sigma_dir, "sigma_mag": self.sigma_mag, "outlier_fraction": self.outlier_fraction, "dropout_fraction": self.dropout_fraction}


def _random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def corrupt(fld: DisplacementField, noise: NoiseSpec, rng: np.random.Generator, movable=None) -> DisplacementField:
    """Perturb a displacement field.

    Non-zero vectors (or those selected by the boolean ``movable`` mask) are
    rotated about a random perpendicular axis by ``|N(0, sigma_dir)|`` and
    scaled by ``1 + N(0, sigma_mag)``.  Then ``floor(rho n)`` of them are
    replaced by uniformly random directions with magnitudes drawn from the
    original magnitude range, and ``floor(dropout n)`` are marked invalid.
    """
    q = fld.vectors.copy()
    mask = np.linalg.norm(q, axis=1) > 0 if movable is None else np.asarray(movable, dtype=bool)
    idx = np.flatnonzero(mask)
    n = len(idx)
    valid = fld.valid.copy()
    outliers = fld.outliers.copy()
    if n == 0:
        return replace(fld, vectors=q, valid=valid, outliers=outliers)
    mags = np.linalg.norm(q[idx], axis=1)
    lo, hi = float(mags.min()), float(mags.max())

    if noise.sigma_dir > 0:
        v = q[idx]
        safe = mags > 0
        u = np.where(safe[:, None], v / np.where(safe, mags, 1.0)[:, None], 0.0)
        r = _random_unit(rng, n)
        axis = np.cross(u, r)
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        ang = np.abs(rng.normal(0.0, noise.sigma_dir, n))
        # Rodrigues with axis perpendicular to v
        v = v * np.cos(ang)[:, None] + np.cross(axis, v) * np.sin(ang)[:, None]
        q[idx] = v
    if noise.sigma_mag > 0:
        q[idx] *= (1.0 + rng.normal(0.0, noise.sigma_mag, n))[:, None]
    n_out = int(math.floor(noise.outlier_fraction * n))
    if n_out:
        pick = rng.choice(idx, size=n_out, replace=False)
        q[pick] = _random_unit(rng, n_out) * rng.uniform(lo, hi, n_out)[:, None]
        outliers[pick] = True
    n_drop = int(math.floor(noise.dropout_fraction * n))
    if n_drop:
        drop = rng.choice(idx, size=n_drop, replace=False)
        valid[drop] = False
    return replace(fld, vectors=q, valid=valid, outliers=outliers)


def flow_error(estimate: DisplacementField, truth: DisplacementField) -> tuple[float, float]:
    """Relative-L1 magnitude term and (1 - cosine) direction term.

    Entries with zero truth vectors are skipped.  Returns the two means.

    Raises:
        NoComparablePoints: every truth vector is zero.
    """
    if len(estimate) != len(truth):
        raise ValueError("fields are not index-aligned")
    l1 = np.abs(truth.vectors).sum(axis=1)
    cmp = l1 > 0
    if not np.any(cmp):
        raise NoComparablePoints("all truth vectors are zero")
    qh = estimate.vectors[cmp]
    q = truth.vectors[cmp]
    mag = np.abs(qh - q).sum(axis=1) / l1[cmp]
    nh = np.linalg.norm(qh, axis=1)
    nq = np.linalg.norm(q, axis=1)
    cos = np.divide(np.einsum("ij,ij->i", qh, q), nh * nq, out=np.zeros(len(q)), where=nh > 0)
    return float(mag.mean()), float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# exchange formats


def write_scene_csv(scene: Scene, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENE_HEADER)
        for p, c, n, m, h in zip(scene.positions, scene.colors, scene.normals, scene.movable, scene.holdable):
            w.writerow([repr(float(x)) for x in p] + [int(x) for x in c] + [repr(float(x)) for x in n] + [int(m), int(h)])


def read_scene_csv(path, joint_truth: JointModel | None = None) -> Scene:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != SCENE_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SCENE_HEADER)}")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, 11)
    return Scene(data[:, 0:3], data[:, 3:6].astype(np.uint8), data[:, 6:9], data[:, 9].astype(int), data[:, 10].astype(int), joint_truth)


def write_field_csv(fld: DisplacementField, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for q, ok in zip(fld.vectors, fld.valid):
            w.writerow([repr(float(x)) for x in q] + [int(ok)])


def read_field_csv(path, delta: float = DEFAULT_DELTA) -> DisplacementField:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != FIELD_HEADER:
        raise ValueError(f"{path}: expected header {','.join(FIELD_HEADER)}")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, 4)
    return DisplacementField(data[:, :3], delta, data[:, 3] != 0)


def write_metadata(path, joint: JointModel | None, delta: float, camera: RigidTransform | None, seed: int | None, **extra) -> None:
    meta = {
        "joint_truth": None if joint is None else joint.to_dict(),
        "delta": delta,
        "camera_pose": None if camera is None else camera.to_dict(),
        "seed": seed,
    }
    meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_metadata(path) -> dict:
    meta = json.loads(Path(path).read_text(encoding="utf-8"))
    if meta.get("joint_truth"):
        meta["joint_truth"] = JointModel.from_dict(meta["joint_truth"])
    if meta.get("camera_pose"):
        meta["camera_pose"] = RigidTransform.from_dict(meta["camera_pose"])
    return meta
