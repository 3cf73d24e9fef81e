import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convdiff.conv_obs import ConvolvedSeries, convolve
from convdiff.errors import DegenerateStatisticError, OptimizationError
from convdiff.inference import (bounded_optimize, drift_lag, estimate_rho,
                                estimate_rho_from_ratio, fit, h1_objective, h2_objective,
                                lga_estimate, lga_objective, lse_alpha, lse_alpha_closed_form,
                                lse_beta, lse_beta_closed_form, smoothing_test)
from convdiff.kernel_math import DEFAULT_BOUND, f_G, gaussian_quantile
from convdiff.sde_sim import SimConfig, euler_maruyama, ou_1d, ou_2d

H_N = 10 ** (-10 / 3)


def _ou(rho, seed, n=100_000, m=1, model=None, alpha=(3.0,), beta=(-2.0, 1.0)):
    model = model or ou_1d()
    rho = np.atleast_1d(rho)
    cfg = SimConfig(n_fine=n * 10 ** m, h_fine=H_N / 10 ** m,
                    burn_in=max(10 ** (-7 / 3), (math.ceil(rho.max()) + 1) * H_N), seed=seed,
                    track_area=bool(np.any(rho > 0)))
    return convolve(euler_maruyama(model, list(alpha), list(beta), cfg), rho, H_N, n)


@pytest.fixture(scope="module")
def ou_half():
    return _ou(0.5, seed=3)


@pytest.fixture(scope="module")
def ou2_series():
    return _ou([2.0, 4.0], seed=17, n=20_000, model=ou_2d(), alpha=(2.0, 0.0, 3.0),
               beta=(-2.0, -0.4, 0.0, 0.1, -3.0, 5.0))


# ---- rho estimator -----------------------------------------------------

def test_three_case_rule():
    assert estimate_rho_from_ratio(1.05) == (0.0, True, False)
    rho, lo, hi = estimate_rho_from_ratio(0.8)
    assert rho == pytest.approx(1.0) and not lo and not hi
    assert estimate_rho_from_ratio(DEFAULT_BOUND.ratio_min - 1e-6) == (100.0, False, True)
    assert estimate_rho_from_ratio(1.0)[0] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 2.0))
def test_rule_lands_in_box(Rn):
    rho, lo, hi = estimate_rho_from_ratio(Rn)
    assert 0.0 <= rho <= DEFAULT_BOUND.rho_bar
    assert lo == (Rn > 1) and hi == (Rn < DEFAULT_BOUND.ratio_min)


def test_degenerate_reduced_qv():
    s = ConvolvedSeries(h_n=1.0, rho=[0.0], values=[[0, 1, 0, 1, 0, 1, 0]])
    with pytest.raises(DegenerateStatisticError):
        estimate_rho(s)


def test_estimate_rho_on_simulation(ou_half):
    est = estimate_rho(ou_half)
    assert est.rho_hat[0] == pytest.approx(0.5, abs=0.06)
    assert not est.clamped_low[0] and not est.clamped_high[0]


# ---- smoothing test ----------------------------------------------------

def test_zero_numerator():
    # increments 1,0,1,0: full sum 2 and step-2 sum 1^2 + 1^2 = 2
    s = ConvolvedSeries(h_n=0.1, rho=[0.0], values=[[0, 1, 1, 2, 2]])
    rep = smoothing_test(s)
    assert rep.t_stat[0] == 0.0
    assert rep.p_value[0] == 0.5


def test_constant_series_is_degenerate():
    s = ConvolvedSeries(h_n=0.1, rho=[0.0], values=[[3.0] * 8])
    with pytest.raises(DegenerateStatisticError):
        smoothing_test(s)


def test_statistic_formula():
    x = np.array([0.0, 0.4, -0.1, 0.3, 0.9, 0.2, 0.5])
    d = np.diff(x)
    red = x[2::2] - x[:-2:2]
    want = math.sqrt(1.5 / np.sum(d ** 4)) * (np.sum(d ** 2) - np.sum(red ** 2))
    rep = smoothing_test(ConvolvedSeries(h_n=0.01, rho=[0.0], values=[x]))
    assert rep.t_stat[0] == pytest.approx(want, rel=1e-13)


def test_report_invariants(ou_half):
    rep = smoothing_test(ou_half)
    assert rep.t_stat[0] < -10
    assert 0 < rep.p_value[0] < 1
    assert rep.log_p_value[0] < -50
    for a, rej in rep.reject_at.items():
        assert rej[0] == (rep.t_stat[0] < gaussian_quantile(a))


def test_p_value_symmetry():
    x = np.cumsum(np.random.default_rng(2).normal(size=2001))
    rep = smoothing_test(ConvolvedSeries(h_n=1.0, rho=[0.0], values=[x]))
    assert rep.p_value[0] == pytest.approx(math.exp(rep.log_p_value[0]), rel=1e-9)


# ---- optimizer ---------------------------------------------------------

def test_optimize_interior():
    r = bounded_optimize(lambda x: -(x[0] - 0.3) ** 2, [[0, 1]], starts=5)
    assert r.x[0] == pytest.approx(0.3, abs=1e-6)
    assert not r.at_boundary[0]


def test_optimize_boundary():
    r = bounded_optimize(lambda x: -(x[0] - 2) ** 2, [[0, 1]])
    assert r.x[0] == pytest.approx(1.0, abs=1e-9)
    assert r.at_boundary[0]


def test_optimize_rosenbrock():
    f = lambda x: -((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)  # noqa: E731
    r = bounded_optimize(f, [[-2, 2], [-2, 2]])
    assert np.allclose(r.x, [1, 1], atol=1e-4)


def test_optimize_all_nonfinite():
    with pytest.raises(OptimizationError):
        bounded_optimize(lambda x: math.nan, [[0, 1], [0, 1]])


def test_optimize_skips_bad_region():
    # -inf on the left half; maximum at 0.8
    f = lambda x: -math.inf if x[0] < 0.5 else -(x[0] - 0.8) ** 2  # noqa: E731
    assert bounded_optimize(f, [[0, 1]]).x[0] == pytest.approx(0.8, abs=1e-6)


def test_optimize_fixed_coordinate():
    r = bounded_optimize(lambda x: -(x[0] - 0.2) ** 2 - (x[1] - 5) ** 2, [[0, 1], [3, 3]])
    assert r.x[1] == 3.0 and r.x[0] == pytest.approx(0.2, abs=1e-6)


# ---- least-square fits -------------------------------------------------

@pytest.mark.parametrize("rho", [0.0, 0.5, 1.0, 3.0])
def test_alpha_constant_squared_increments(rho):
    c, h, n = 4.0, 0.01, 400
    signs = np.random.default_rng(0).choice([-1.0, 1.0], size=n)
    x = np.concatenate([[0.0], np.cumsum(signs * math.sqrt(c * h))])
    s = ConvolvedSeries(h_n=h, rho=[rho], values=[x])
    want = min(math.sqrt(c / f_G(rho, rho).value), 10.0)
    est, obj = lse_alpha(s, [rho], ou_1d())
    assert est[0] == pytest.approx(want, rel=1e-6)
    assert lse_alpha_closed_form(s, [rho], ou_1d())[0] == pytest.approx(want, rel=1e-12)


def test_alpha_clipped_to_box():
    x = np.concatenate([[0.0], np.cumsum(np.full(100, 5.0))])
    s = ConvolvedSeries(h_n=0.01, rho=[0.0], values=[x])
    est = lse_alpha(s, [0.0], ou_1d())
    assert est.estimate[0] == 10.0 and est.at_boundary[0]


def test_fast_and_generic_objectives_agree(ou_half, ou2_series):
    for s, model, rho, alpha, beta in (
            (ou_half, ou_1d(), [0.5], [2.7], [-1.5, 0.4]),
            (ou2_series, ou_2d(), [2.0, 4.0], [2.2, 0.1, 2.9], [-2, -0.3, 0.1, 0.2, -2.8, 4.0])):
        f1, g1 = (h1_objective(s, rho, model, fast=v) for v in (True, False))
        assert f1(np.array(alpha)) == pytest.approx(g1(np.array(alpha)), rel=1e-9)
        f2, g2 = (h2_objective(s, rho, model, fast=v) for v in (True, False))
        assert f2(np.array(beta)) == pytest.approx(g2(np.array(beta)), rel=1e-9)
        f3, g3 = (lga_objective(s, model, fast=v) for v in (True, False))
        th = np.concatenate([alpha, beta])
        assert f3(th) == pytest.approx(g3(th), rel=1e-9)


def test_beta_matches_bounded_least_squares(ou_half):
    est = lse_beta(ou_half, [0.5], ou_1d())
    assert np.allclose(est.estimate, lse_beta_closed_form(ou_half, [0.5], ou_1d()), atol=1e-5)


def test_beta_projection_on_active_bound():
    # a path drifting upwards pulls the slope above its upper bound of -0.01
    t = np.linspace(0, 1, 2001)
    x = np.exp(3 * t) + 0.001 * np.sin(400 * t)
    s = ConvolvedSeries(h_n=t[1] - t[0], rho=[0.0], values=[x])
    est = lse_beta(s, [0.0], ou_1d())
    cf = lse_beta_closed_form(s, [0.0], ou_1d())
    assert est.estimate[0] == pytest.approx(-0.01, abs=1e-6) and est.at_boundary[0]
    assert np.allclose(est.estimate, cf, atol=1e-5)


def test_drift_lag():
    assert drift_lag([0.0]) == 2
    assert drift_lag([0.99]) == 2
    assert drift_lag([2.0, 4.0]) == 6


def test_alpha_scale_equivariance(ou_half):
    a = lse_alpha(ou_half, [0.5], ou_1d()).estimate[0]
    scaled = ConvolvedSeries(h_n=ou_half.h_n, rho=ou_half.rho, values=2 * ou_half.values)
    b = lse_alpha(scaled, [0.5], ou_1d()).estimate[0]
    assert b == pytest.approx(2 * a, rel=1e-6)


def test_plug_in_coherence(ou_half):
    est = fit(ou_half, ou_1d())
    known = fit(ou_half, ou_1d(), known_rho=est.rho_estimate.rho_hat)
    assert np.array_equal(est.alpha_hat, known.alpha_hat)
    assert np.array_equal(est.beta_hat, known.beta_hat)


def test_fit_recovers_parameters(ou_half):
    res = fit(ou_half, ou_1d())
    assert res.alpha_hat[0] == pytest.approx(3.0, rel=0.02)
    assert res.beta_hat[0] < 0
    assert res.test.t_stat[0] < -10


def test_lga_biased_under_smoothing(ou_half):
    lga = lga_estimate(ou_half, ou_1d())
    ours = lse_alpha(ou_half, [0.5], ou_1d()).estimate[0]
    assert lga.alpha_hat[0] < ours - 0.15


def test_lga_unbiased_without_smoothing():
    s = _ou(0.0, seed=5)
    lga = lga_estimate(s, ou_1d())
    ours = lse_alpha(s, [0.0], ou_1d()).estimate[0]
    assert lga.alpha_hat[0] == pytest.approx(3.0, rel=0.02)
    assert ours == pytest.approx(lga.alpha_hat[0], rel=1e-3)


def test_two_dimensional_fit(ou2_series):
    res = fit(ou2_series, ou_2d())
    assert np.allclose(res.rho_estimate.rho_hat, [2, 4], atol=0.25)
    assert np.allclose(res.alpha_hat, [2, 0, 3], atol=0.1)
    assert np.all(res.test.t_stat < -10)


def test_rejects_under_smoothing():
    for r in range(5):
        assert smoothing_test(_ou(0.3, seed=40 + r)).t_stat[0] < gaussian_quantile(0.001)
