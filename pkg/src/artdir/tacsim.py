"""Quasi-static simulation of a contact-regulating manipulation loop.

The gripper pad and the handle are coupled by a grid of marker springs.
The articulated part has no dynamics: after every gripper motion its joint
coordinate settles at the local minimum of the spring energy.  The
controller pushes along a coarse direction and, after each push, applies
corrective gripper motions that drive the marker deformation back toward the
reference contact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .artsim import JointModel
from .errors import ContactLost, JointLimit
from .geom import RigidTransform, normalize


def marker_grid(n: int = 5, size: float = 0.02) -> np.ndarray:
    """``n x n`` markers on a square pad of side ``size`` (contact-frame xy plane)."""
    s = np.linspace(-size / 2, size / 2, n)
    xx, yy = np.meshgrid(s, s)
    return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(n * n)])


@dataclass(frozen=True)
class ContactState:
    """Marker positions in the gripper frame: reference (C0) and current (C)."""

    reference: np.ndarray
    current: np.ndarray
    slipped: bool = False

    @property
    def deformation(self) -> np.ndarray:
        return self.current - self.reference

    @property
    def tangential(self) -> np.ndarray:
        return self.deformation[:, :2]

    @property
    def normal(self) -> np.ndarray:
        return self.deformation[:, 2]

    def mismatch(self) -> float:
        """Mean squared marker deformation, the regulated contact metric."""
        d = self.deformation
        return float(np.mean(np.einsum("ij,ij->i", d, d)))

    def peak(self) -> float:
        return float(np.linalg.norm(self.deformation, axis=1).max())


@dataclass(frozen=True)
class TacWorld:
    joint: JointModel
    handle_pose: RigidTransform  # contact frame on the handle at joint coordinate 0
    gripper_pose: RigidTransform
    stiffness: float = 500.0  # N/m per marker
    slip_threshold: float = 0.005
    joint_range: tuple = (0.0, math.pi / 2 + 0.2)
    q: float = 0.0
    markers: np.ndarray = field(default_factory=marker_grid)
    slipped: bool = False

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("stiffness must be positive")
        if not self.joint_range[0] <= self.q <= self.joint_range[1]:
            raise ValueError("joint coordinate outside its range")

    @classmethod
    def grasped(cls, joint: JointModel, handle_pose: RigidTransform, **kw) -> TacWorld:
        """World with the gripper attached to the handle at zero deformation."""
        return cls(joint, handle_pose, handle_pose, **kw)

    def handle_markers(self, q: float | None = None) -> np.ndarray:
        q = self.q if q is None else q
        base = self.handle_pose.apply(self.markers)
        return self.joint.transform(q).apply(base)

    def gripper_markers(self) -> np.ndarray:
        return self.gripper_pose.apply(self.markers)

    def deformation_world(self) -> np.ndarray:
        return self.handle_markers() - self.gripper_markers()

    def energy(self, q: float | None = None) -> float:
        e = self.handle_markers(q) - self.gripper_markers()
        return 0.5 * self.stiffness * float(np.einsum("ij,ij->", e, e))

    def contact_state(self) -> ContactState:
        e_local = self.deformation_world() @ self.gripper_pose.rotation
        return ContactState(self.markers, self.markers + e_local, self.slipped)


def _equilibrium(w: TacWorld, q0: float, targets: np.ndarray, max_iter: int = 60) -> float:
    """Local minimizer of the spring energy in the joint coordinate (Newton)."""
    j = w.joint
    a = j.axis_direction
    base = w.handle_pose.apply(w.markers)
    q = q0
    for _ in range(max_iter):
        h = j.transform(q).apply(base)
        r = h - targets
        if j.kind == "prismatic":
            d1 = np.broadcast_to(a, h.shape)
            d2 = np.zeros_like(h)
        else:
            rel = h - j.axis_point
            d1 = np.cross(a, rel) + (j.pitch * a if j.kind == "screw" else 0.0)
            d2 = np.cross(a, np.cross(a, rel))
        g1 = float(np.einsum("ij,ij->", r, d1))
        g2 = float(np.einsum("ij,ij->", d1, d1) + np.einsum("ij,ij->", r, d2))
        if g2 <= 0:
            g2 = float(np.einsum("ij,ij->", d1, d1))
        dq = -g1 / g2
        q += dq
        if abs(dq) < 1e-15 * max(1.0, abs(q)):
            break
    return q


def step_world(w: TacWorld, motion: RigidTransform) -> tuple[TacWorld, ContactState]:
    """Move the gripper by ``motion`` (world frame) and settle the joint.

    Raises:
        ContactLost: the contact already slipped.
        JointLimit: the equilibrium lies outside the joint range.
    """
    if w.slipped:
        raise ContactLost("contact has slipped")
    gp = motion.compose(w.gripper_pose)
    moved = replace(w, gripper_pose=gp)
    q = _equilibrium(moved, w.q, gp.apply(w.markers))
    lo, hi = w.joint_range
    if q < lo - 1e-12 or q > hi + 1e-12:
        raise JointLimit(f"joint coordinate {q:.4g} outside [{lo:.4g}, {hi:.4g}]")
    moved = replace(moved, q=min(hi, max(lo, q)))
    state = moved.contact_state()
    if state.peak() > w.slip_threshold:
        d = state.deformation
        n = np.linalg.norm(d, axis=1, keepdims=True)
        capped = d * np.minimum(1.0, w.slip_threshold / np.maximum(n, 1e-300))
        moved = replace(moved, slipped=True)
        state = ContactState(state.reference, state.reference + capped, True)
    return moved, state


def corrective_motion(w: TacWorld, gain: float) -> RigidTransform:
    """Gauss-Newton step on the marker mismatch with the joint held fixed.

    Solves for the small gripper twist (rotation about the pad centre plus a
    translation) that best cancels the current marker deformation, scaled by
    ``gain``.
    """
    e = w.deformation_world()
    o = w.gripper_pose.translation
    r = w.gripper_markers() - o
    rc = r - r.mean(axis=0)
    v = e.mean(axis=0)
    m = np.einsum("ij,ij->", rc, rc) * np.eye(3) - rc.T @ rc
    omega = np.linalg.lstsq(m, np.cross(rc, e - v).sum(axis=0), rcond=None)[0]
    angle = gain * float(np.linalg.norm(omega))
    # rotation about the marker centroid, then translation
    centre = o + r.mean(axis=0)
    rot = RigidTransform.about_axis(omega, centre, angle) if angle > 0 else RigidTransform.identity()
    return RigidTransform.from_translation(gain * v).compose(rot)


@dataclass(frozen=True)
class ControllerConfig:
    step: float = 0.002  # m per iteration along the current direction
    max_iterations: int = 1000
    budget: float = 0.003  # m of marker deformation
    gain: float = 1.0
    target: float = math.pi / 2  # joint progress counted as success
    correction: bool = True
    max_inner: int = 100

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0 < self.gain <= 1:
            raise ValueError("gain must lie in (0, 1]")


@dataclass
class RolloutReport:
    joint_progress: list = field(default_factory=list)
    mismatch: list = field(default_factory=list)
    peak_deformation: float = 0.0
    success: bool = False
    termination: str = ""
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "joint_progress": self.joint_progress,
            "mismatch": self.mismatch,
            "peak_deformation": self.peak_deformation,
            "success": self.success,
            "termination": self.termination,
            "iterations": self.iterations,
        }


def regulate(w: TacWorld, d, cfg: ControllerConfig | None = None) -> RolloutReport:
    """Push along ``d`` while regulating the contact; report, never raise.

    Each iteration translates the gripper by ``step * d``.  With correction
    enabled, corrective motions follow until the mismatch drops below
    ``(budget / 4)^2`` and ``d`` is re-estimated from the tactile-sensed
    motion of the handle.  Terminates on reaching ``target`` joint progress,
    on a joint limit, on slip, or after ``max_iterations``.
    """
    cfg = cfg or ControllerConfig()
    if not cfg.budget < w.slip_threshold:
        raise ValueError("deformation budget must be below the slip threshold")
    d = normalize(np.asarray(d, dtype=float))
    q0 = w.q
    tol = (0.25 * cfg.budget) ** 2
    rep = RolloutReport()

    def sensed_handle(world):
        return world.gripper_pose.translation + world.deformation_world().mean(axis=0)

    prev = sensed_handle(w)
    for it in range(1, cfg.max_iterations + 1):
        rep.iterations = it
        try:
            w, st = step_world(w, RigidTransform.from_translation(cfg.step * d))
            rep.peak_deformation = max(rep.peak_deformation, st.peak())
            if st.slipped:
                rep.termination = "slip"
                break
            if cfg.correction:
                inner = 0
                while st.mismatch() >= tol and inner < cfg.max_inner:
                    w, st = step_world(w, corrective_motion(w, cfg.gain))
                    inner += 1
                cur = sensed_handle(w)
                moved = cur - prev
                if np.linalg.norm(moved) > 1e-9:
                    d = moved / np.linalg.norm(moved)
                prev = cur
        except JointLimit:
            rep.termination = "joint_limit"
            break
        rep.joint_progress.append(w.q - q0)
        rep.mismatch.append(st.mismatch())
        if w.q - q0 >= cfg.target:
            rep.termination = "target"
            break
    else:
        rep.termination = "max_iterations"
    rep.success = rep.termination == "target"
    return rep


def door_world(radius: float = 0.35, opening: float = math.pi / 2, **kw) -> TacWorld:
    """A vertical-hinge door grasped ``radius`` from the hinge, closed at q = 0."""
    joint = JointModel("revolute", np.array([0.0, -1.0, 0.0]), np.zeros(3))
    handle = RigidTransform(np.eye(3), np.array([radius, 0.0, 0.05]))
    kw.setdefault("joint_range", (0.0, opening + 0.2))
    return TacWorld.grasped(joint, handle, **kw)


def drawer_world(**kw) -> TacWorld:
    joint = JointModel("prismatic", np.array([0.0, 0.0, 1.0]))
    handle = RigidTransform(np.eye(3), np.array([0.0, 0.0, 0.05]))
    kw.setdefault("joint_range", (0.0, 0.4))
    return TacWorld.grasped(joint, handle, **kw)
