import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climlag.decomposition import LoessConfig, loess_smooth, stl_decompose
from climlag.errors import BadWindow, SeriesTooShort


def tricube_oracle(y, t, window):
    """Direct local-linear tricube fit at point t over its ``window`` nearest neighbours.

    The bandwidth is the distance to the farthest neighbour, so that
    neighbour gets weight 0. Solves the 2x2 weighted normal equations.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    half = window // 2
    lo = min(max(t - half, 0), n - window)
    idx = np.arange(lo, lo + window)
    d = np.abs(idx - t)
    h = d.max()
    w = np.clip(1 - (d / h) ** 3, 0, None) ** 3
    if np.count_nonzero(w) < 2:  # a line is not identified by one point: local mean
        return float(np.dot(w, y[idx]) / w.sum())
    A = np.array([[w.sum(), (w * idx).sum()], [(w * idx).sum(), (w * idx * idx).sum()]])
    b = np.array([(w * y[idx]).sum(), (w * idx * y[idx]).sum()])
    a0, a1 = np.linalg.solve(A, b)
    return a0 + a1 * t


def test_constant_is_fixed_point():
    for window in (3, 5, 7):
        np.testing.assert_allclose(loess_smooth([5.0] * 5, window), [5.0] * 5, rtol=0, atol=1e-12)


@pytest.mark.parametrize("window", [3, 5, 7, 11, 31])
def test_line_reproduced(window):
    y = 2.5 * np.arange(20) - 7
    np.testing.assert_allclose(loess_smooth(y, window, 1), y, atol=1e-10)


def test_quadratic_against_normal_equations():
    y = [0, 1, 4, 9, 16]
    # window 3 puts zero weight on both outer neighbours: the fit returns y[2]
    assert loess_smooth(y, 3, 1)[2] == pytest.approx(tricube_oracle(y, 2, 3), abs=1e-12)
    assert loess_smooth(y, 3, 1)[2] == pytest.approx(4.0, abs=1e-12)
    # window 5 gives tricube weights (0.6699, 1, 0.6699) on {1, 4, 9}
    assert loess_smooth(y, 5, 1)[2] == pytest.approx(tricube_oracle(y, 2, 5), abs=1e-12)
    assert loess_smooth(y, 5, 1)[2] == pytest.approx(4.5726, abs=1e-4)


def test_interior_points_match_oracle(rng):
    y = rng.normal(size=25)
    out = loess_smooth(y, 7, 1)
    for t in range(25):
        assert out[t] == pytest.approx(tricube_oracle(y, t, 7), abs=1e-10)


def test_very_wide_window_is_ols():
    x = np.arange(15.0)
    y = np.sin(x) + 0.3 * x
    slope, intercept = np.polyfit(x, y, 1)
    np.testing.assert_allclose(loess_smooth(y, 100001, 1), intercept + slope * x, atol=1e-6)


@pytest.mark.parametrize("window", [2, 4, 1])
def test_bad_window(window):
    with pytest.raises(BadWindow):
        loess_smooth(np.arange(10.0), window)


def test_weights_and_points_permute_together(rng):
    y = rng.normal(size=15)
    w = rng.uniform(0.2, 1.0, 15)
    out = loess_smooth(y, 5, 1, w)
    # reversing the series reverses the output (the window layout is symmetric)
    np.testing.assert_allclose(loess_smooth(y[::-1], 5, 1, w[::-1])[::-1], out, atol=1e-12)


def test_zero_weight_point_is_ignored(rng):
    y = rng.normal(size=15)
    w = np.ones(15)
    w[7] = 0.0
    spiked = y.copy()
    spiked[7] = 1e6
    a = loess_smooth(y, 5, 1, w)
    b = loess_smooth(spiked, 5, 1, w)
    np.testing.assert_allclose(np.delete(a, 7), np.delete(b, 7), atol=1e-9)


# -- STL ---------------------------------------------------------------------

def test_sinusoid_has_no_remainder():
    t = np.arange(48)
    y = 3.0 * np.sin(2 * np.pi * t / 12)
    comp = stl_decompose(y)
    assert np.max(np.abs(comp.remainder)) < 1e-6 * 3.0
    assert np.ptp(comp.trend) < 1e-6


def test_ramp_has_no_seasonal():
    y = 0.5 * np.arange(48) + 10
    comp = stl_decompose(y)
    assert np.max(np.abs(comp.seasonal)) < 1e-6 * np.ptp(y)
    np.testing.assert_allclose(comp.trend, y, atol=1e-6 * np.ptp(y))


def test_monthly_offsets_recovered():
    offsets = np.array([-4, -3, -1, 0, 2, 5, 7, 6, 3, 0, -6, -9], dtype=float)
    offsets -= offsets.mean()
    t = np.arange(48)
    comp = stl_decompose(0.4 * t + 20 + offsets[t % 12])
    recovered = np.array([comp.seasonal[t % 12 == m].mean() for m in range(12)])
    assert np.max(np.abs(recovered - offsets)) <= 0.02 * np.ptp(offsets)


def test_seasonal_balance(panel):
    comp = stl_decompose(panel.cases.astype(float))
    amplitude = np.ptp(comp.seasonal) / 2
    for start in range(len(panel) - 11):
        assert abs(comp.seasonal[start:start + 12].mean()) <= 0.05 * amplitude


@settings(max_examples=30, deadline=None)
@given(st.integers(24, 60), st.integers(0, 2**31), st.sampled_from([0, 1, 2]))
def test_reconstruction_identity(n, seed, robust):
    y = np.random.default_rng(seed).normal(100, 30, n)
    comp = stl_decompose(y, 12, LoessConfig(robust_iterations=robust))
    recon = comp.trend + comp.seasonal + comp.remainder
    assert np.all(np.abs(recon - y) <= 1e-9 * np.maximum(1.0, np.abs(y)))
    np.testing.assert_array_equal(comp.observed, y)


def test_too_short():
    with pytest.raises(SeriesTooShort):
        stl_decompose(np.arange(23.0))


@pytest.mark.parametrize("kwargs", [dict(seasonal_window=5), dict(seasonal_window=14), dict(trend_window=24)])
def test_config_validation(kwargs):
    with pytest.raises(BadWindow):
        LoessConfig(**kwargs)


def test_robustness_downweights_outlier():
    t = np.arange(48)
    y = 10 * np.sin(2 * np.pi * t / 12) + 0.2 * t
    y_out = y.copy()
    y_out[20] += 500
    robust = stl_decompose(y_out, 12, LoessConfig(robust_iterations=2))
    plain = stl_decompose(y_out, 12, LoessConfig(robust_iterations=0))
    clean = stl_decompose(y)
    err_robust = np.max(np.abs(np.delete(robust.trend - clean.trend, 20)))
    err_plain = np.max(np.abs(np.delete(plain.trend - clean.trend, 20)))
    assert err_robust < err_plain
    assert robust.weights[20] < 0.1
