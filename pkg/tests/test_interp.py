import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendeq.errors import DegenerateRangeError
from trendeq.gpr import Regime, fit, resample_in_range
from trendeq.interp import linear_resample

from conftest import series_from_arrays


def test_two_point_line():
    series = series_from_arrays("p", [60.0, 70.0], [80.0, 60.0])
    r = linear_resample(series)
    assert r.regime is Regime.LINEAR_IN_RANGE
    # conceptually the 3-point resample [80, 70, 60]; on the 50-grid the
    # interpolant is the same straight line
    expected = 80.0 + (60.0 - 80.0) * (r.grid - 60.0) / 10.0
    np.testing.assert_allclose(r.values, expected, atol=1e-12)
    assert np.all(r.variances == 0.0)


def test_passes_through_observations_on_grid():
    # 50-point grid over [60, 109]: spacing 1, hits integer observation ages
    ages = [60.0, 72.0, 88.0, 109.0]
    values = [80.0, 55.0, 70.0, 62.0]
    series = series_from_arrays("p", ages, values)
    r = linear_resample(series)
    for a, v in zip(ages, values):
        idx = np.where(r.grid == a)[0]
        assert idx.size == 1
        assert r.values[idx[0]] == pytest.approx(v, abs=1e-12)


def test_midpoint_of_first_segment():
    series = series_from_arrays("p", [60.0, 65.0, 70.0], [80.0, 90.0, 60.0])
    v = np.interp(62.5, series.ages, series.values)
    assert v == 85.0
    r = linear_resample(series)
    # grid point nearest 62.5 interpolates on the same segment
    assert np.interp(62.5, r.grid, r.values) == pytest.approx(85.0, abs=1e-9)


def test_degenerate_single_observation():
    with pytest.raises(DegenerateRangeError):
        linear_resample(series_from_arrays("p", [62.0], [75.0]))


def test_grid_identical_to_gpr_in_range():
    rng = np.random.default_rng(2)
    x = np.sort(rng.uniform(55, 80, 9))
    y = 70 + rng.normal(0, 6, 9)
    series = series_from_arrays("p", x, y)
    model = fit(series)
    np.testing.assert_array_equal(linear_resample(series).grid,
                                  resample_in_range(model, series).grid)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_values_within_bracketing_observations(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    x = np.sort(rng.uniform(30, 90, n))
    if np.any(np.diff(x) == 0):
        return
    y = rng.uniform(20, 110, n)
    series = series_from_arrays("p", x, y)
    r = linear_resample(series)
    for g, v in zip(r.grid, r.values):
        i = np.searchsorted(x, g, side="right") - 1
        i = min(max(i, 0), n - 2)
        lo, hi = sorted((y[i], y[i + 1]))
        assert lo - 1e-9 <= v <= hi + 1e-9


def test_affine_series_matches_line():
    series = series_from_arrays("p", [50.0, 55.0, 61.0, 70.0],
                                [90.0, 85.0, 79.0, 70.0])  # slope -1
    r = linear_resample(series)
    np.testing.assert_allclose(r.values, 90.0 - (r.grid - 50.0), atol=1e-12)
