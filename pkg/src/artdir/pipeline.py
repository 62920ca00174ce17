"""Grasp selection, subset-sampled direction inference, and two baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dirstat
from .artsim import DisplacementField, Scene
from .dirstat import VmfParams
from .errors import InsufficientField, NoValidGrasp, TooManyDegenerateSubsets, UnknownPart
from .geom import RigidTransform, directions_from_transforms, normalize, rotation_angle
from .kabsch import fit_rigid_batch

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _part_mask(scene: Scene, part: int | None) -> np.ndarray:
    if part is None:
        return scene.movable > 0
    mask = scene.movable == part
    if part <= 0 or not np.any(mask):
        raise UnknownPart(f"no points with movable id {part}")
    return mask


def select_grasp_point(scene: Scene, part: int = 1) -> tuple[np.ndarray, bool]:
    """Centroid of the part's holdable points.

    Returns ``(g, fallback)``; ``fallback`` is True when the part has no
    holdable points and the movable-region centroid was used instead.
    """
    mask = _part_mask(scene, part)
    hold = mask & (scene.holdable > 0)
    if np.any(hold):
        return scene.positions[hold].mean(axis=0), False
    return scene.positions[mask].mean(axis=0), True


def movable_centroid(scene: Scene, part: int = 1) -> np.ndarray:
    return scene.positions[_part_mask(scene, part)].mean(axis=0)


# ---------------------------------------------------------------------------
# grasp pose sampling


@dataclass(frozen=True)
class GripperSpec:
    """Parallel-jaw gripper as three boxes in the gripper frame.

    Gripper frame: +z approach (fingers point along +z), +x closing axis,
    +y across the finger width.  The fingertips reach ``tip_depth`` past the
    grasp point.
    """

    max_opening: float = 0.08
    finger_thickness: float = 0.01
    finger_width: float = 0.02
    finger_length: float = 0.05
    palm_thickness: float = 0.02
    tip_depth: float = 0.01
    clearance: float = 0.002


@dataclass(frozen=True)
class GraspPose:
    pose: RigidTransform
    width: float
    grasp_point: np.ndarray

    def to_dict(self) -> dict:
        return {"pose": self.pose.to_dict(), "width": self.width, "grasp_point": self.grasp_point.tolist()}


def grasp_width(local: np.ndarray, gripper: GripperSpec, holdable=None):
    """Evaluate one gripper orientation.

    ``local`` holds scene points in the gripper frame (origin at the grasp
    point).  Returns ``(width, centre_offset)`` for a collision-free grasp,
    or ``None`` when the pose collides or holds nothing graspable.
    """
    x, y, z = local[:, 0], local[:, 1], local[:, 2]
    g = gripper
    z_tip = g.tip_depth
    z_base = g.tip_depth - g.finger_length
    held = (np.abs(y) <= g.finger_width / 2) & (z >= z_base) & (z <= z_tip) & (np.abs(x) <= g.max_opening / 2)
    if holdable is not None:
        if not np.any(held & holdable):
            return None
    elif not np.any(held):
        return None
    xmin = x[held].min()
    xmax = x[held].max()
    c = g.clearance
    ft = g.finger_thickness
    yy = np.abs(y) <= g.finger_width / 2 + c
    in_fingers = yy & (z >= z_base - c) & (z <= z_tip + c) & (((x >= xmin - c - ft) & (x <= xmin - c)) | ((x >= xmax + c) & (x <= xmax + c + ft)))
    in_palm = yy & (z >= z_base - g.palm_thickness - c) & (z < z_base) & (x >= xmin - c - ft) & (x <= xmax + c + ft)
    if np.any((in_fingers | in_palm) & ~held):
        return None
    return float(xmax - xmin), float(0.5 * (xmin + xmax))


def approach_rotations(approach, n_approach: int, n_roll: int, cone: float, offset: float = 0.0, roll_offset: float = 0.0) -> np.ndarray:
    """Gripper orientations: a Fibonacci cap of approach axes times a roll grid.

    Roll angles are evenly spaced over a full turn, so every orientation is
    paired with its 180-degree jaw flip whenever ``n_roll`` is even.
    """
    a0 = normalize(np.asarray(approach, dtype=float))
    e1, e2 = dirstat.tangent_basis(a0)
    out = []
    for i in range(n_approach):
        cos_t = 1.0 - (1.0 - math.cos(cone)) * (i + 0.5) / n_approach if n_approach > 1 else 1.0
        sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
        phi = i * GOLDEN_ANGLE + offset
        z = cos_t * a0 + sin_t * (math.cos(phi) * e1 + math.sin(phi) * e2)
        b1, b2 = dirstat.tangent_basis(z)
        for j in range(n_roll):
            psi = 2.0 * math.pi * j / n_roll + roll_offset
            xa = math.cos(psi) * b1 + math.sin(psi) * b2
            out.append(np.column_stack([xa, np.cross(z, xa), z]))
    return np.array(out)


def sample_grasp_pose(
    scene: Scene,
    g,
    gripper: GripperSpec | None = None,
    home: RigidTransform | None = None,
    rng: np.random.Generator | None = None,
    n_approach: int = 16,
    n_roll: int = 16,
    cone: float = math.radians(45.0),
    approach=None,
    tie_tol: float = 1e-3,
) -> GraspPose:
    """Collision-free grasp of minimal width around ``g``.

    Orientations are sampled about approach axes within ``cone`` of the
    inward surface normal at the holdable region (``n_approach * n_roll`` in
    total, 256 by default).  Among collision-free poses the narrowest wins;
    widths within ``tie_tol`` are tied and resolved by the smallest rotation
    angle to ``home``.

    Raises:
        NoValidGrasp: every sampled orientation collides.
    """
    gripper = gripper or GripperSpec()
    home = home or RigidTransform.identity()
    g = np.asarray(g, dtype=float)
    reach = gripper.finger_length + gripper.palm_thickness + gripper.max_opening + gripper.finger_thickness + 0.05
    near = np.linalg.norm(scene.positions - g, axis=1) <= reach
    pts = scene.positions[near] - g
    hold = scene.holdable[near] > 0
    if not np.any(hold & (np.linalg.norm(pts, axis=1) <= gripper.finger_length)):
        raise NoValidGrasp("no holdable points within reach of the grasp point")
    if approach is None:
        nrm = scene.normals[near][hold]
        approach = -nrm.sum(axis=0)
        if np.linalg.norm(approach) < 1e-9:
            approach = g
    off, roll = (0.0, 0.0) if rng is None else tuple(rng.random(2) * 2.0 * math.pi)
    rots = approach_rotations(approach, n_approach, n_roll, cone, off, roll)
    best = []
    for r in rots:
        res = grasp_width(pts @ r, gripper, hold)
        if res is not None:
            best.append((res[0], res[1], r))
    if not best:
        raise NoValidGrasp(f"all {len(rots)} sampled orientations collide")
    wmin = min(b[0] for b in best)
    tied = [b for b in best if b[0] <= wmin + tie_tol]
    width, shift, r = min(tied, key=lambda b: (rotation_angle(home.rotation.T @ b[2]), b[0]))
    return GraspPose(RigidTransform(r, g + shift * r[:, 0]), width, g)


# ---------------------------------------------------------------------------
# direction inference


@dataclass(frozen=True)
class EstimatorConfig:
    subset_count: int = 500
    subset_size: int = 20
    min_valid_points: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.subset_count < 10:
            raise ValueError("subset_count must be >= 10")
        if self.subset_size < 3:
            raise ValueError("subset_size must be >= 3")

    @classmethod
    def from_dict(cls, d: dict) -> EstimatorConfig:
        return cls(**{k: int(v) for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class DirectionEstimate:
    d_star: np.ndarray
    vmf: VmfParams
    samples: np.ndarray
    residuals: np.ndarray
    n_skipped: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        r = self.residuals
        return {
            "d_star": self.d_star.tolist(),
            "mu": self.vmf.mu.tolist(),
            "kappa": self.vmf.kappa,
            "n_samples": int(len(self.samples)),
            "n_skipped": int(self.n_skipped),
            "residual_stats": {
                "mean": float(r.mean()),
                "median": float(np.median(r)),
                "max": float(r.max()),
            },
        }


def subset_indices(pool: np.ndarray, cfg: EstimatorConfig) -> np.ndarray:
    """``(K, subset_size)`` index draws; subset ``k`` uses its own RNG stream."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.subset_count)
    return np.stack([np.random.default_rng(c).choice(pool, size=cfg.subset_size, replace=False) for c in children])


def estimate_direction(scene: Scene, fld: DisplacementField, g, cfg: EstimatorConfig | None = None, part: int | None = None) -> DirectionEstimate:
    """Infer the interaction direction at ``g`` from a displacement field.

    Rigid transforms are fitted to random point subsets of the movable part,
    mapped to directions at ``g``, summarised by a vMF fit, and reduced to
    their geodesic Fréchet mean.

    Raises:
        InsufficientField: too few valid movable vectors.
        TooManyDegenerateSubsets: more than half the subsets were unusable.
        DegenerateResultant: the surviving directions cancel out.
    """
    cfg = cfg or EstimatorConfig()
    if len(fld) != len(scene):
        raise ValueError("field is not aligned with the scene")
    mask = _part_mask(scene, part) & fld.valid
    pool = np.flatnonzero(mask)
    need = max(cfg.min_valid_points, cfg.subset_size)
    if len(pool) < need:
        raise InsufficientField(f"{len(pool)} valid movable vectors, need {need}")
    idx = subset_indices(pool, cfg)
    src = scene.positions[idx]
    dst = src + fld.vectors[idx]
    rot, trans, ok = fit_rigid_batch(src, dst)
    dirs, ok_dir = directions_from_transforms(rot, trans, g)
    good = ok & ok_dir
    n_good = int(good.sum())
    if n_good < 0.5 * cfg.subset_count:
        raise TooManyDegenerateSubsets(f"{cfg.subset_count - n_good} of {cfg.subset_count} subsets degenerate")
    diff = np.einsum("knj,kij->kni", src[good], rot[good]) + trans[good][:, None, :] - dst[good]
    residuals = np.einsum("kni,kni->kn", diff, diff).mean(axis=1)
    samples = dirs[good]
    vmf = dirstat.vmf_fit(samples)
    d_star = dirstat.frechet_mean(samples)
    return DirectionEstimate(d_star, vmf, samples, residuals, cfg.subset_count - n_good)


def baseline_normal_only(scene: Scene, part: int = 1) -> np.ndarray:
    """Fréchet mean of the surface normals on the moving part."""
    return dirstat.frechet_mean(scene.normals[_part_mask(scene, part)])


def baseline_flow_argmax(scene: Scene, fld: DisplacementField, g=None, part: int | None = None) -> np.ndarray:
    """Direction of the largest valid movable displacement, reused unchanged at ``g``."""
    mask = _part_mask(scene, part) & fld.valid
    if not np.any(mask):
        raise InsufficientField("no valid movable displacement vectors")
    q = fld.vectors[mask]
    mags = np.linalg.norm(q, axis=1)
    k = int(np.argmax(mags))
    if mags[k] == 0:
        raise InsufficientField("all movable displacements are zero")
    return q[k] / mags[k]
