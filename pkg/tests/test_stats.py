import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artdir.errors import EmptyTable, LengthMismatch, TooFewSamples
from artdir.stats import KDE_GRID, P_MAX, P_MIN, betainc, kde, paired_t_statistic, paired_t_test_one_sided, silverman_bandwidth, summarize, t_cdf

# one-sided critical values for df = 4 from a printed t table
T_TABLE_DF4 = [(0.741, 0.75), (1.533, 0.90), (2.132, 0.95), (2.776, 0.975), (3.747, 0.99), (4.604, 0.995)]


def test_hand_computed_example():
    diff = np.array([-1.2, -0.4, -0.8, -1.0, -0.6])
    b = np.linspace(1.0, 3.0, 5)
    # mean -0.8, sd sqrt(0.1), t = -0.8 / (sqrt(0.1) / sqrt(5))
    t, df = paired_t_statistic(b + diff, b)
    assert df == 4
    assert t == pytest.approx(-0.8 / math.sqrt(0.1 / 5), rel=1e-12)
    assert t == pytest.approx(-5.657, rel=1e-3)
    assert paired_t_test_one_sided(b + diff, b) == pytest.approx(0.0024, rel=1e-2)


@pytest.mark.parametrize("t,p", T_TABLE_DF4)
def test_t_table_df4(t, p):
    assert t_cdf(t, 4) == pytest.approx(p, abs=5e-4)
    assert t_cdf(-t, 4) == pytest.approx(1 - p, abs=5e-4)


def test_t_cdf_closed_forms():
    # df = 1 is Cauchy, df = 2 has F(t) = 1/2 + t / (2 sqrt(2 + t^2))
    for t in (-3.0, -0.5, 0.2, 4.0):
        assert t_cdf(t, 1) == pytest.approx(0.5 + math.atan(t) / math.pi, abs=1e-12)
        assert t_cdf(t, 2) == pytest.approx(0.5 + t / (2 * math.sqrt(2 + t * t)), abs=1e-12)


def test_betainc_edges_and_symmetry():
    assert betainc(2.0, 3.0, 0.0) == 0.0 and betainc(2.0, 3.0, 1.0) == 1.0
    assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-14)
    assert betainc(2.5, 0.5, 0.4) == pytest.approx(1 - betainc(0.5, 2.5, 0.6), abs=1e-13)


def test_zero_variance_rules():
    a = np.array([0.1, 0.5, 0.3])
    assert paired_t_test_one_sided(a, a) == 0.5
    assert paired_t_test_one_sided(a - 0.1, a) == P_MIN
    assert paired_t_test_one_sided(a + 0.1, a) == P_MAX


def test_errors():
    with pytest.raises(LengthMismatch):
        paired_t_test_one_sided([1.0, 2.0], [1.0])
    with pytest.raises(TooFewSamples):
        paired_t_test_one_sided([1.0], [2.0])


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=30)


@given(vectors, st.integers(0, 2**32 - 1))
def test_antisymmetry(a, seed):
    a = np.array(a)
    b = a + np.random.default_rng(seed).normal(size=a.size)
    p, q = paired_t_test_one_sided(a, b), paired_t_test_one_sided(b, a)
    assert 0 < p < 1 and p + q == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_p_decreases_as_b_worsens(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, 12)
    b0 = a + rng.normal(0, 0.2, 12)
    ps = [paired_t_test_one_sided(a, b0 + c) for c in np.linspace(0, 0.5, 8)]
    assert all(y <= x for x, y in zip(ps, ps[1:]))


def test_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(0)
    for n in (3, 8, 40):
        a, b = rng.normal(size=n), rng.normal(size=n)
        ref = scipy_stats.ttest_rel(a, b, alternative="less").pvalue
        assert paired_t_test_one_sided(a, b) == pytest.approx(ref, rel=1e-9)


def test_summary_three_values():
    s = summarize([0.1, 0.2, 0.3])
    assert s["median"] == pytest.approx(0.2) and s["q1"] == pytest.approx(0.15) and s["q3"] == pytest.approx(0.25)
    assert s["whisker_fence"] == pytest.approx([0.0, 0.4], abs=1e-12)
    assert s["whiskers"] == pytest.approx([0.1, 0.3])


def test_summary_identical_and_nan():
    s = summarize([0.7, 0.7, 0.7, float("nan")])
    assert s["n"] == 3 and s["iqr"] == 0.0 and s["whiskers"] == [0.7, 0.7]
    with pytest.raises(EmptyTable):
        summarize([])


def test_kde_integrates_and_uses_silverman():
    x = np.random.default_rng(1).uniform(0.5, 1.5, 200)
    grid, dens = kde(x)
    assert len(grid) == KDE_GRID and grid[0] == 0.0 and grid[-1] == pytest.approx(math.pi)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)
    h = silverman_bandwidth(x)
    iqr = np.subtract(*np.quantile(x, [0.75, 0.25]))
    assert h == pytest.approx(0.9 * min(np.std(x, ddof=1), iqr / 1.34) * 200 ** -0.2)


def test_kde_identical_values_concentrate():
    grid, dens = kde([1.0] * 10)
    k = int(np.argmax(dens))
    assert abs(grid[k] - 1.0) <= (grid[1] - grid[0]) / 2
    assert np.count_nonzero(dens) == 1
