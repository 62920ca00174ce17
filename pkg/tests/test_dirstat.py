import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artdir.dirstat import (
    KAPPA_MAX,
    VmfParams,
    exp_map,
    frechet_gradient_norm,
    frechet_mean,
    log_map,
    mean_resultant_length,
    tangent_basis,
    vmf_fit,
    vmf_pdf,
    vmf_sample,
)
from artdir.errors import DegenerateResultant, TooFewSamples
from artdir.geom import angle_between, angles_between, normalize

from conftest import rotation_from_seed, seeds

Z = np.array([0.0, 0.0, 1.0])


def _uniform_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _grid_frechet(samples, centre, half_width_deg=5.0, step_deg=0.25):
    """Brute-force minimizer of the summed squared arc length on a tangent grid."""
    e1, e2 = tangent_basis(centre)
    offs = np.radians(np.arange(-half_width_deg, half_width_deg + 1e-9, step_deg))
    best, best_cost = None, math.inf
    for a in offs:
        for b in offs:
            mu = exp_map(centre, a * e1 + b * e2)
            cost = float(np.sum(np.arccos(np.clip(samples @ mu, -1, 1)) ** 2))
            if cost < best_cost:
                best, best_cost = mu, cost
    return best


def test_pdf_uniform_limit():
    assert vmf_pdf([0.3, 0.4, math.sqrt(0.75)], VmfParams(Z, 0.0)) == pytest.approx(1 / (4 * math.pi))


def test_pdf_at_mode_kappa_2_matches_quadrature():
    # normalizer by Simpson quadrature of exp(k cos t) sin t over the sphere
    k = 2.0
    t = np.linspace(0.0, math.pi, 20001)
    f = np.exp(k * np.cos(t)) * np.sin(t)
    h = t[1] - t[0]
    integral = h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    oracle = math.exp(k) / (2 * math.pi * integral)
    got = vmf_pdf(Z, VmfParams(Z, k))
    assert got == pytest.approx(oracle, rel=1e-10)
    assert got == pytest.approx(0.32427, abs=5e-5)


def test_pdf_integrates_to_one_monte_carlo():
    rng = np.random.default_rng(0)
    d = _uniform_sphere(rng, 1_000_000)
    for k in (0.5, 5.0, 30.0):
        est = 4 * math.pi * vmf_pdf(d, VmfParams(normalize([1.0, -2.0, 0.5]), k)).mean()
        assert est == pytest.approx(1.0, abs=0.01)


def test_pdf_large_kappa_finite():
    v = vmf_pdf(Z, VmfParams(Z, 1e6))
    assert math.isfinite(v) and v > 0


def test_pdf_argmax_is_closest_grid_point():
    rng = np.random.default_rng(1)
    grid = _uniform_sphere(rng, 5000)
    mu = normalize([0.2, 0.9, -0.3])
    dens = vmf_pdf(grid, VmfParams(mu, 7.0))
    assert np.argmax(dens) == np.argmax(grid @ mu)


def test_fit_identical_samples_hits_cap():
    p = vmf_fit(np.tile(normalize([1, 2, 3]), (5, 1)))
    assert p.kappa == KAPPA_MAX
    assert np.allclose(p.mu, normalize([1, 2, 3]))


def test_fit_errors():
    with pytest.raises(DegenerateResultant):
        vmf_fit(np.array([Z, -Z]))
    with pytest.raises(TooFewSamples):
        vmf_fit(Z[None])


def test_fit_round_trip_kappa_50():
    s = vmf_sample(VmfParams(Z, 50.0), 10_000, np.random.default_rng(2))
    p = vmf_fit(s)
    assert math.degrees(angle_between(p.mu, Z)) < 2.0
    assert 45.0 <= p.kappa <= 55.0


@pytest.mark.parametrize("kappa", [1.0, 10.0, 50.0, 200.0])
def test_sampler_cosine_moments(kappa):
    # E[w] = coth(k) - 1/k for the cosine to mu on S^2
    s = vmf_sample(VmfParams(Z, kappa), 200_000, np.random.default_rng(3))
    w = s @ Z
    expected = 1 / math.tanh(kappa) - 1 / kappa
    sd = math.sqrt(np.var(w) / len(w))
    assert abs(w.mean() - expected) < 5 * sd


def test_sample_examples():
    mu = normalize([0.3, -0.1, 0.9])
    s = vmf_sample(VmfParams(mu, 1e5), 100, np.random.default_rng(4))
    assert np.degrees(angles_between(s, mu)).max() < 1.0
    u = vmf_sample(VmfParams(mu, 0.0), 100_000, np.random.default_rng(5))
    assert mean_resultant_length(u) < 0.01
    a = vmf_sample(VmfParams(mu, 3.0), 50, np.random.default_rng(6))
    b = vmf_sample(VmfParams(mu, 3.0), 50, np.random.default_rng(6))
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


def test_log_exp_inverse():
    rng = np.random.default_rng(7)
    mu = normalize(rng.normal(size=3))
    d = vmf_sample(VmfParams(mu, 2.0), 100, rng)
    v = log_map(mu, d)
    assert np.allclose(v @ mu, 0.0, atol=1e-12)
    back = np.array([exp_map(mu, x) for x in v])
    assert np.allclose(back, d, atol=1e-12)


def test_frechet_single_sample():
    u = normalize([1, 1, 0])
    assert np.allclose(frechet_mean(u[None]), u)


def test_frechet_two_samples_slerp_midpoint():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([math.cos(math.pi / 3), math.sin(math.pi / 3), 0.0])
    theta = math.pi / 3
    mid = (math.sin(theta / 2) * a + math.sin(theta / 2) * b) / math.sin(theta)
    assert angle_between(frechet_mean(np.array([a, b])), mid) < 1e-12


def test_frechet_degenerate():
    with pytest.raises(DegenerateResultant):
        frechet_mean(np.array([Z, -Z]))


def test_frechet_vs_grid_search_kappa_20():
    rng = np.random.default_rng(8)
    mu0 = normalize([0.4, -0.2, 0.9])
    s = vmf_sample(VmfParams(mu0, 20.0), 500, rng)
    got = frechet_mean(s)
    oracle = _grid_frechet(s, mu0)
    assert math.degrees(angle_between(got, oracle)) < 0.5
    assert frechet_gradient_norm(got, s) < 1e-9


@given(seeds, seeds)
def test_frechet_rotation_equivariance(s1, s2):
    rng = np.random.default_rng(s1)
    s = vmf_sample(VmfParams(normalize(rng.normal(size=3)), rng.uniform(1.0, 50.0)), 50, rng)
    Q = rotation_from_seed(s2)
    assert np.linalg.norm(frechet_mean(s @ Q.T) - Q @ frechet_mean(s)) < 1e-7


@given(seeds, st.floats(min_value=0.5, max_value=500.0))
def test_frechet_first_order_optimality(seed, kappa):
    rng = np.random.default_rng(seed)
    s = vmf_sample(VmfParams(normalize(rng.normal(size=3)), kappa), 200, rng)
    assert frechet_gradient_norm(frechet_mean(s), s) < 1e-9


@given(seeds)
def test_tight_cluster_matches_euclidean_mean(seed):
    rng = np.random.default_rng(seed)
    mu = normalize(rng.normal(size=3))
    e1, e2 = tangent_basis(mu)
    # offsets within 2.5 deg of mu keep every pair within 5 deg
    r = np.radians(2.5) * np.sqrt(rng.random(100))
    phi = rng.random(100) * 2 * math.pi
    s = np.array([exp_map(mu, ri * (math.cos(p) * e1 + math.sin(p) * e2)) for ri, p in zip(r, phi)])
    euclid = normalize(s.sum(axis=0))
    assert math.degrees(angle_between(frechet_mean(s), euclid)) < 0.05
