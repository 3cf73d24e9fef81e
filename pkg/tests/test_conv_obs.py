import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convdiff.conv_obs import ConvolvedSeries, convolve, read_series_csv, subsample
from convdiff.errors import ConfigurationError, DataError, RangeError
from convdiff.sde_sim import SamplePath, SimConfig, euler_maruyama, ou_1d
from convdiff.variation_stats import variations


def _poly_path(fn, h, n_burn, N, with_area=False):
    t = -n_burn * h + h * np.arange(N + 1)
    area = None
    if with_area:
        # Simpson's rule: exact step integrals for polynomials up to degree 3
        a, b = t[:-1], t[1:]
        area = ((fn(a) + 4 * fn(0.5 * (a + b)) + fn(b)) * h / 6)[None, :]
    return SamplePath(h=h, origin_time=t[0], values=fn(t)[None, :], area=area)


def test_rho_zero_is_subsampling():
    p = euler_maruyama(ou_1d(), [3], [-2, 1], SimConfig(n_fine=1000, h_fine=0.01, burn_in=0.1))
    s = convolve(p, [0.0], 0.1)
    assert np.array_equal(s.values[0], p.values[0, 10::10])
    assert s.n == 100


def test_constant_path_stays_constant():
    p = SamplePath(h=0.01, origin_time=-0.5, values=np.full((1, 301), 4.0))
    for rho in (0.3, 1.0, 7.0):
        assert np.allclose(convolve(p, [rho], 0.05).values, 4.0)


def test_linear_path_sample_average():
    K, h = 10, 0.001
    p = _poly_path(lambda t: t, h, 50, 50 + 2000)
    s = convolve(p, [1.0], K * h)
    i = np.arange(s.n + 1)
    assert np.allclose(s.values[0], i * K * h - (K - 1) * h / 2, atol=1e-13)


def test_linear_path_exact_integral():
    K, h = 10, 0.001
    p = _poly_path(lambda t: t, h, 50, 50 + 2000, with_area=True)
    s = convolve(p, [1.0], K * h)
    i = np.arange(s.n + 1)
    assert np.allclose(s.values[0], i * K * h - K * h / 2, atol=1e-13)


def test_riemann_convergence_on_quadratic():
    # window mean of t^2 over (t - w, t] is t^2 - t w + w^2/3
    h_n, rho, T = 0.1, 1.0, 2.0
    errs = []
    for m in (1, 2, 3):
        h = h_n / 10 ** m
        n_burn = 2 * 10 ** m
        p = _poly_path(lambda t: t ** 2, h, n_burn, n_burn + int(round(T / h)))
        s = convolve(p, [rho], h_n)
        t = s.times
        w = rho * h_n
        errs.append(np.max(np.abs(s.values[0] - (t ** 2 - t * w + w * w / 3))))
    assert errs[1] / errs[2] == pytest.approx(10, rel=0.1)
    assert errs[0] / errs[1] == pytest.approx(10, rel=0.1)


def test_fractional_window_length_rounds():
    p = _poly_path(lambda t: t, 0.01, 100, 400)
    # rho h_n / h = 2.5 -> K = 3 (halves round up)
    s = convolve(p, [0.5], 0.05)
    assert s.values[0, 0] == pytest.approx(-0.01)


def test_tiny_window_falls_back_with_warning(caplog):
    p = _poly_path(lambda t: t, 0.01, 10, 110)
    with caplog.at_level(logging.WARNING):
        s = convolve(p, [0.01], 0.1)
    assert "direct observation" in caplog.text
    assert np.allclose(s.values[0], s.times)


def test_window_before_start_raises():
    p = _poly_path(lambda t: t, 0.01, 3, 200)
    with pytest.raises(RangeError):
        convolve(p, [1.0], 0.1)


def test_step_not_multiple_raises():
    p = _poly_path(lambda t: t, 0.01, 30, 200)
    with pytest.raises(ConfigurationError):
        convolve(p, [1.0], 0.015)


def test_too_many_observations():
    p = _poly_path(lambda t: t, 0.01, 30, 130)
    with pytest.raises(RangeError):
        convolve(p, [0.0], 0.1, n=11)
    assert convolve(p, [0.0], 0.1, n=10).n == 10


def test_per_axis_smoothing():
    h = 0.001
    t = -0.1 + h * np.arange(1101)
    p = SamplePath(h=h, origin_time=-0.1, values=np.vstack([t, t]))
    s = convolve(p, [0.0, 2.0], 0.01)
    assert np.allclose(s.values[0], s.times)
    assert np.allclose(s.values[1], s.times - (20 - 1) * h / 2)


@pytest.mark.parametrize("rho", [0.5, 1.0, 10.0])
def test_smoothing_lowers_full_qv(rho):
    cfg = SimConfig(n_fine=10_000 * 10, h_fine=1e-4, burn_in=0.05, seed=21)
    p = euler_maruyama(ou_1d(), [3], [-2, 1], cfg)
    direct = variations(convolve(p, [0.0], 1e-3)).full_qv
    smooth = variations(convolve(p, [rho], 1e-3)).full_qv
    assert smooth < direct


def test_subsample_index_arithmetic():
    s = ConvolvedSeries(h_n=0.5, rho=[1.0], values=np.arange(11.0)[None, :])
    assert subsample(s, 1).values.tolist() == s.values.tolist()
    two = subsample(s, 2)
    assert two.values[0].tolist() == [0, 2, 4, 6, 8, 10]
    assert two.h_n == 1.0 and two.rho[0] == 0.5
    assert subsample(s, 10).values[0].tolist() == [0, 10]
    with pytest.raises(RangeError):
        subsample(s, 11)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(5, 60))
def test_subsample_length(k, n):
    s = ConvolvedSeries(h_n=1.0, rho=[0.0], values=np.arange(n + 1.0)[None, :])
    if k > n:
        with pytest.raises(RangeError):
            subsample(s, k)
    else:
        assert subsample(s, k).n == n // k


def test_csv_round_trip(tmp_path):
    vals = np.random.default_rng(1).normal(size=(2, 31))
    s = ConvolvedSeries(h_n=0.25, rho=[0.3, 0.0], values=vals)
    f = tmp_path / "s.csv"
    s.to_csv(f)
    assert f.read_text().splitlines()[0] == "t,x1,x2"
    back = read_series_csv(f)
    assert back.h_n == pytest.approx(0.25)
    assert np.allclose(back.values, vals, rtol=1e-14, atol=0)
    assert np.all(np.isnan(back.rho))


def test_series_rejects_nonfinite():
    with pytest.raises(DataError):
        ConvolvedSeries(h_n=1.0, rho=[0.0], values=[[0.0, np.nan, 1.0]])
