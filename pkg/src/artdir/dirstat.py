"""Directional statistics on the unit 2-sphere.

von Mises-Fisher density, closed-form parameter estimate, exact inverse-CDF
sampler, and the geodesic (arc-length) Fréchet mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResultant, NonConvergence, TooFewSamples
from .geom import normalize

KAPPA_MAX = 1e6
R_MIN = 1e-6
KAPPA_UNIFORM = 1e-6


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (3,) or abs(np.linalg.norm(mu) - 1.0) > 1e-9:
            raise ValueError("mu must be a unit 3-vector")
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", float(self.kappa))


def _as_samples(s) -> np.ndarray:
    d = np.asarray(s, dtype=float)
    if d.ndim == 1:
        d = d[None]
    if d.ndim != 2 or d.shape[1] != 3 or len(d) == 0:
        raise ValueError("direction samples must be a non-empty (n, 3) array")
    return d


def vmf_pdf(d, params: VmfParams):
    """Density per steradian, ``kappa / (4 pi sinh kappa) * exp(kappa mu.d)``.

    Evaluated in the overflow-free form
    ``kappa / (2 pi (1 - exp(-2 kappa))) * exp(kappa (mu.d - 1))``.
    Accepts a single direction or an ``(n, 3)`` array.
    """
    k = params.kappa
    dots = np.asarray(d, dtype=float) @ params.mu
    if k < KAPPA_UNIFORM:
        return np.full_like(dots, 1.0 / (4.0 * np.pi)) if np.ndim(dots) else 1.0 / (4.0 * np.pi)
    norm = k / (2.0 * np.pi * -np.expm1(-2.0 * k))
    return norm * np.exp(k * (dots - 1.0))


def mean_resultant_length(s) -> float:
    d = _as_samples(s)
    return float(np.linalg.norm(d.sum(axis=0)) / len(d))


def vmf_fit(s) -> VmfParams:
    """Estimate (mu, kappa) with the Banerjee approximation, kappa capped at 1e6.

    Raises:
        TooFewSamples: fewer than two samples.
        DegenerateResultant: mean resultant length <= 1e-6.
    """
    d = _as_samples(s)
    if len(d) < 2:
        raise TooFewSamples("vMF fit needs at least two samples")
    total = d.sum(axis=0)
    length = np.linalg.norm(total)
    rbar = length / len(d)
    if not rbar > R_MIN:
        raise DegenerateResultant(f"mean resultant length {rbar:.3g} too small")
    mu = total / length
    if rbar >= 1.0:
        kappa = KAPPA_MAX
    else:
        kappa = min(KAPPA_MAX, rbar * (3.0 - rbar * rbar) / (1.0 - rbar * rbar))
    return VmfParams(mu, kappa)


def tangent_basis(mu) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``mu`` to a right-handed orthonormal frame."""
    mu = np.asarray(mu, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = normalize(np.cross(mu, helper))
    e2 = np.cross(mu, e1)
    return e1, e2


def vmf_sample(params: VmfParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. directions, ``(n, 3)``.

    The cosine to ``mu`` is drawn by inverting its CDF,
    ``w = 1 + log(u + (1 - u) exp(-2 kappa)) / kappa``; the azimuth is uniform.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = params.kappa
    u = 1.0 - rng.random(n)  # (0, 1]
    phi = rng.random(n) * 2.0 * np.pi
    if k < 1e-12:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * k)) / k
    w = np.clip(w, -1.0, 1.0)
    rad = np.sqrt(np.maximum(0.0, 1.0 - w * w))
    e1, e2 = tangent_basis(params.mu)
    out = w[:, None] * params.mu + rad[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def log_map(mu, d) -> np.ndarray:
    """Tangent vectors at ``mu`` pointing to each row of ``d``, length = arc distance."""
    mu = np.asarray(mu, dtype=float)
    d = np.atleast_2d(d)
    cos = d @ mu
    perp = d - cos[:, None] * mu
    sin = np.linalg.norm(perp, axis=1)
    theta = np.arctan2(sin, cos)
    scale = np.divide(theta, sin, out=np.ones_like(theta), where=sin > 1e-300)
    return perp * scale[:, None]


def exp_map(mu, v) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    v = np.asarray(v, dtype=float)
    t = np.linalg.norm(v)
    if t == 0.0:
        return mu.copy()
    out = np.cos(t) * mu + np.sin(t) * (v / t)
    return out / np.linalg.norm(out)


def frechet_mean(s, tol: float = 1e-12, max_iter: int = 1000, grad_tol: float = 1e-9) -> np.ndarray:
    """Minimizer of the summed squared arc length to the samples.

    Fixed-point iteration ``mu <- exp_mu(mean(log_mu(d_i)))`` starting from
    the normalized Euclidean mean.

    Raises:
        DegenerateResultant: samples balance out (resultant length <= 1e-6).
        NonConvergence: no convergence within ``max_iter`` iterations.
    """
    d = _as_samples(s)
    total = d.sum(axis=0)
    if not np.linalg.norm(total) / len(d) > R_MIN:
        raise DegenerateResultant("samples are antipodally balanced")
    mu = total / np.linalg.norm(total)
    step = np.inf
    for _ in range(max_iter):
        g = log_map(mu, d).mean(axis=0)
        step = np.linalg.norm(g)
        if step < tol:
            return mu
        mu = exp_map(mu, g)
    g = log_map(mu, d).mean(axis=0)
    if np.linalg.norm(g) < grad_tol:
        return mu
    raise NonConvergence(f"Fréchet mean did not converge (last step {step:.3g} rad)")


def frechet_gradient_norm(mu, s) -> float:
    """Norm of the mean log-map at ``mu``; zero at a stationary point."""
    return float(np.linalg.norm(log_map(mu, _as_samples(s)).mean(axis=0)))
