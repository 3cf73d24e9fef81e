import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from convdiff.conv_obs import ConvolvedSeries, convolve
from convdiff.errors import DegenerateStatisticError, InsufficientDataError, RangeError
from convdiff.kernel_math import f_G, ratio_R, reduced_qv_limit
from convdiff.sde_sim import SimConfig, euler_maruyama, ou_1d
from convdiff.variation_stats import ratio_Rn, rv_curve, rv_slope, variations

H_N = 10 ** (-10 / 3)


def _series(x, h=1.0):
    return ConvolvedSeries(h_n=h, rho=[0.0], values=np.asarray(x, dtype=float)[None, :])


def _ou_series(rho, seed, n=100_000, m=1):
    cfg = SimConfig(n_fine=n * 10 ** m, h_fine=H_N / 10 ** m, burn_in=10 ** (-7 / 3), seed=seed,
                    track_area=rho > 0)
    return convolve(euler_maruyama(ou_1d(), [3.0], [-2.0, 1.0], cfg), [rho], H_N, n)


def test_constant_series():
    v = variations(_series(np.full(9, 2.0)))
    assert (v.full_qv, v.reduced_qv, v.quartic_sum) == (0, 0, 0)
    with pytest.raises(DegenerateStatisticError):
        ratio_Rn(v)


def test_alternating_series():
    v = variations(_series([0, 1, 0, 1, 0]))
    assert v.full_qv == 1.0
    assert v.reduced_qv == 0.0
    assert v.quartic_sum == 4.0
    assert v.n_used == 4 and v.n_pairs == 2


def test_odd_n_drops_last_pair():
    v = variations(_series([0, 1, 3, 6, 10, 15]))
    # step-2 increments: 3-0, 10-3
    assert v.reduced_qv * 5 == pytest.approx(9 + 49)
    assert v.n_pairs == 2


def test_too_short():
    with pytest.raises(InsufficientDataError):
        variations(_series([0, 1, 2, 3]))


def test_ratio_of_equal_qvs():
    v = variations(_series([0, 1, 2, 3, 4]))
    assert ratio_Rn(v) == pytest.approx(1 / 2)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(5, 200), elements=st.floats(-1e3, 1e3)),
       st.floats(1e-4, 10.0))
def test_rv1_matches_full_qv(x, h):
    s = _series(x, h)
    v = variations(s)
    rv = rv_curve(s, 0, 1)[0][1]
    assert rv == pytest.approx(v.n_used * h * v.full_qv, rel=1e-12, abs=1e-9)
    assert v.full_qv >= 0 and v.reduced_qv >= 0 and v.quartic_sum >= 0


def test_rv_curve_linear_series():
    c, n = 0.7, 50
    s = _series(c * np.arange(n + 1))
    for k, rv in rv_curve(s, 0, n):
        assert rv == pytest.approx((n // k) * c * c * k * k, rel=1e-13)


def test_rv_curve_constant_and_range():
    s = _series(np.ones(11))
    assert all(rv == 0 for _, rv in rv_curve(s, 0, 10))
    with pytest.raises(RangeError):
        rv_curve(s, 0, 11)
    with pytest.raises(RangeError):
        rv_curve(s, 1, 3)


def test_rv_slope_exact_line():
    curve = [(k, 3.0 + 2.0 * k) for k in range(1, 21)]
    slope, se = rv_slope(curve)
    assert slope == pytest.approx(2.0)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_full_qv_direct_ou():
    v = variations(_ou_series(0.0, seed=4))
    assert v.full_qv == pytest.approx(9.0, rel=0.02)
    assert v.reduced_qv == pytest.approx(v.full_qv, rel=0.03)
    assert ratio_Rn(v) == pytest.approx(1.0, abs=0.03)


def test_ratio_at_rho_one():
    assert ratio_Rn(variations(_ou_series(1.0, seed=9))) == pytest.approx(0.8, rel=0.03)


@pytest.mark.slow
@pytest.mark.parametrize("rho", [0.5, 1.0, 1.5, 3.0])
def test_qv_limits_over_seeds(rho):
    full, red = [], []
    for r in range(20):
        v = variations(_ou_series(rho, seed=1000 + r))
        full.append(v.full_qv / 9.0)
        red.append(v.reduced_qv / 9.0)
    assert np.mean(full) == pytest.approx(f_G(rho, rho).value, rel=0.03)
    assert np.mean(red) == pytest.approx(reduced_qv_limit(rho), rel=0.03)
    assert np.mean(full) / np.mean(red) == pytest.approx(ratio_R(rho), rel=0.03)


def test_quartic_sum_compensated():
    # many tiny increments: naive float summation of x^4 ~ 1e-40 terms stays exact here
    x = np.cumsum(np.full(100_001, 1e-10))
    v = variations(_series(x))
    assert v.quartic_sum == pytest.approx(1e5 * 1e-40, rel=1e-6)
    assert math.isfinite(v.full_qv)
