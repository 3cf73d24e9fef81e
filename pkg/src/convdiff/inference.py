"""Estimators and tests for convolutionally observed diffusions.

* ``estimate_rho``: smoothing parameter from the ratio of full to reduced
  quadratic variation, inverted through ``ratio_R``.
* ``smoothing_test``: studentised full-minus-reduced QV statistic for
  ``H0: rho = 0`` with left-tailed normal p-values.
* ``lse_alpha`` / ``lse_beta``: least-square quasi-likelihood fits of the
  diffusion and drift parameters, with ``rho`` known or estimated.
* ``lga_estimate``: the Euler local-Gaussian contrast that treats the series
  as direct observations (the biased baseline).
* ``bounded_optimize``: multistart bounded Nelder-Mead shared by the fits.

Models flagged ``constant_diffusion`` and models exposing ``drift_features``
are fitted through sufficient statistics, which makes each objective
evaluation independent of ``n``; the generic path evaluates the sums
directly and is used for any other model.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import lsq_linear, minimize
from scipy.special import log_ndtr
from scipy.stats import qmc

from .conv_obs import ConvolvedSeries
from .errors import (ConfigurationError, DegenerateStatisticError, InsufficientDataError,
                     OptimizationError)
from .kernel_math import (DEFAULT_BOUND, SmoothingBound, f_G_matrix, gaussian_cdf,
                          gaussian_quantile, ratio_R_inverse)
from .sde_sim import ModelSpec
from .variation_stats import ratio_Rn, variations

DEFAULT_SIG_LEVELS = (0.10, 0.05, 0.025, 0.01, 0.001)
_TINY = np.finfo(float).tiny


# --------------------------------------------------------------------------
# smoothing parameter and test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RhoEstimate:
    rho_hat: np.ndarray
    Rn: np.ndarray
    clamped_low: np.ndarray
    clamped_high: np.ndarray


def estimate_rho_from_ratio(Rn: float, bound: SmoothingBound = DEFAULT_BOUND) -> tuple[float, bool, bool]:
    """Three-case rule: ``0`` above 1, ``R^{-1}`` on the range of ``R``, ``rho_bar`` below it.

    Returns ``(rho_hat, clamped_low, clamped_high)``.
    """
    if not math.isfinite(Rn):
        raise DegenerateStatisticError(f"ratio R_n is not finite ({Rn})")
    if Rn > 1.0:
        return 0.0, True, False
    if Rn < bound.ratio_min:
        return bound.rho_bar, False, True
    return ratio_R_inverse(Rn, bound), False, False


def estimate_rho(series: ConvolvedSeries, bound: SmoothingBound = DEFAULT_BOUND) -> RhoEstimate:
    d = series.dim
    rho, Rn = np.empty(d), np.empty(d)
    lo, hi = np.zeros(d, dtype=bool), np.zeros(d, dtype=bool)
    for ax in range(d):
        Rn[ax] = ratio_Rn(variations(series, ax))
        rho[ax], lo[ax], hi[ax] = estimate_rho_from_ratio(Rn[ax], bound)
    return RhoEstimate(rho_hat=rho, Rn=Rn, clamped_low=lo, clamped_high=hi)


@dataclass(frozen=True)
class TestReport:
    """``p_value = Phi(t_stat)``; ``log_p_value`` stays accurate when Phi underflows.

    ``p_value`` is floored at the smallest normal double so it stays in (0, 1).
    """

    __test__ = False

    t_stat: np.ndarray
    p_value: np.ndarray
    log_p_value: np.ndarray
    reject_at: dict


def test_statistic(series: ConvolvedSeries, axis: int = 0) -> float:
    v = variations(series, axis)
    if not v.quartic_sum > 0:
        raise DegenerateStatisticError(f"axis {axis}: quartic sum is zero (constant series)")
    return math.sqrt(1.5 / v.quartic_sum) * (v.full_sum - v.reduced_sum)


def smoothing_test(series: ConvolvedSeries,
                   sig_levels: Sequence[float] = DEFAULT_SIG_LEVELS) -> TestReport:
    t = np.array([test_statistic(series, ax) for ax in range(series.dim)])
    p = np.array([min(max(gaussian_cdf(ti), _TINY), 1.0 - 2 ** -53) for ti in t])
    logp = log_ndtr(t)
    reject = {float(a): t < gaussian_quantile(float(a)) for a in sig_levels}
    return TestReport(t_stat=t, p_value=p, log_p_value=logp, reject_at=reject)


# --------------------------------------------------------------------------
# bounded optimizer
# --------------------------------------------------------------------------


class OptimResult(NamedTuple):
    x: np.ndarray
    value: float
    iters: int
    n_evals: int
    at_boundary: np.ndarray


def _as_box(box) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    if box.ndim == 1 and box.shape == (2,):
        box = box[None, :]
    if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] > box[:, 1]):
        raise ConfigurationError("box must be an (k, 2) array of [low, high] rows with low <= high")
    return box


def _initial_simplex(x0, lo, hi, scale=0.1):
    k = x0.size
    sim = np.tile(x0, (k + 1, 1))
    for i in range(k):
        step = scale * (hi[i] - lo[i])
        sim[i + 1, i] = x0[i] + step if x0[i] + step <= hi[i] else x0[i] - step
    return sim


def bounded_optimize(objective: Callable[[np.ndarray], float], box, starts: int = 8,
                     tol: float = 1e-8, max_evals: int = 20_000,
                     extra_starts: Sequence | None = None) -> OptimResult:
    """Maximise ``objective`` over a box by multistart Nelder-Mead.

    Start points are the first ``starts`` non-trivial points of the Halton
    sequence mapped onto the box, plus any ``extra_starts`` (clipped).  Each
    run stops once the simplex diameter falls below ``tol``; the best run is
    then restarted once from its optimum to undo early simplex collapse.
    Non-finite values and exceptions from ``objective`` count as ``-inf``.
    Degenerate coordinates (``low == high``) are held fixed.
    """
    box = _as_box(box)
    lo_all, hi_all = box[:, 0], box[:, 1]
    free = hi_all > lo_all
    fixed_x = lo_all.copy()
    lo, hi = lo_all[free], hi_all[free]
    k = int(free.sum())
    n_evals = 0

    def full(z):
        x = fixed_x.copy()
        x[free] = z
        return x

    def neg(z):
        nonlocal n_evals
        n_evals += 1
        try:
            with np.errstate(all="ignore"):
                v = float(objective(full(np.clip(z, lo, hi))))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            return math.inf
        return -v if math.isfinite(v) else math.inf

    if k == 0:
        v = -neg(np.empty(0))
        if not math.isfinite(v):
            raise OptimizationError("objective is not finite at the (fully fixed) box point")
        return OptimResult(full(np.empty(0)), v, 0, n_evals, np.ones(box.shape[0], dtype=bool))

    pts = []
    if starts > 0:
        halton = qmc.Halton(d=k, scramble=False).random(starts + 1)[1:]
        pts.extend(lo + halton * (hi - lo))
    for s in extra_starts or ():
        s = np.asarray(s, dtype=float).reshape(-1)
        pts.append(np.clip(s[free] if s.size == box.shape[0] else s, lo, hi))
    if not pts:
        pts.append(0.5 * (lo + hi))

    def run(x0):
        res = minimize(neg, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options=dict(xatol=tol, fatol=math.inf, maxfev=max_evals,
                                    adaptive=k > 2, initial_simplex=_initial_simplex(x0, lo, hi)))
        return np.clip(res.x, lo, hi), float(res.fun), int(res.nit)

    best_x, best_f, iters = None, math.inf, 0
    for x0 in pts:
        if not math.isfinite(neg(x0)):
            continue
        x, f, it = run(x0)
        iters += it
        if f < best_f:
            best_x, best_f = x, f
    if best_x is None:
        raise OptimizationError(f"objective is non-finite at all {len(pts)} start points")
    x, f, it = run(best_x)
    iters += it
    if f < best_f:
        best_x, best_f = x, f

    xf = full(best_x)
    span = hi_all - lo_all
    edge = np.maximum(1e-6 * span, 1e-12)
    at_b = (np.abs(xf - lo_all) <= edge) | (np.abs(hi_all - xf) <= edge)
    return OptimResult(xf, -best_f, iters, n_evals, at_b)


# --------------------------------------------------------------------------
# least-square quasi-likelihoods
# --------------------------------------------------------------------------


@dataclass
class ParamEstimate:
    """Unpacks as ``(estimate, objective)``; diagnostics ride along."""

    estimate: np.ndarray
    objective: float
    iters: int = 0
    n_evals: int = 0
    at_boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    closed_form: np.ndarray | None = None

    def __iter__(self):
        yield self.estimate
        yield self.objective


def _rho_vector(rho, d: int) -> np.ndarray:
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if rho.shape == (1,) and d > 1:
        rho = np.full(d, rho[0])
    if rho.shape != (d,) or not np.all(np.isfinite(rho)):
        raise ConfigurationError(f"rho must be a finite vector of length {d}")
    return rho


def _check_series(series: ConvolvedSeries, model: ModelSpec):
    if series.dim != model.dim_d:
        raise ConfigurationError(
            f"series has {series.dim} axes but model {model.name} has dimension {model.dim_d}")


def h1_objective(series: ConvolvedSeries, rho, model: ModelSpec,
                 bound: SmoothingBound = DEFAULT_BOUND, fast: bool | None = None) -> Callable:
    """``alpha -> -sum_k ||dX_k dX_k^T / h - A(X_{k-1}, alpha) * f_G(rho)||^2``."""
    _check_series(series, model)
    F = f_G_matrix(_rho_vector(rho, series.dim), bound)
    dX = np.diff(series.values, axis=1)
    n = dX.shape[1]
    if n < 1:
        raise InsufficientDataError("need at least one increment")
    Q = np.einsum("ik,jk->kij", dX, dX) / series.h_n
    if fast is None:
        fast = model.constant_diffusion
    if fast:
        sQ = Q.sum(axis=0)
        sQQ = float(np.sum(Q * Q))
        x0 = series.values[:, 0]

        def objective(alpha):
            G = model.diffusion_matrix(x0, alpha) * F
            return -(sQQ - 2.0 * float(np.sum(sQ * G)) + n * float(np.sum(G * G)))
    else:
        xprev = series.values[:, :-1].T

        def objective(alpha):
            G = model.diffusion_matrix(xprev, alpha) * F
            return -float(np.sum((Q - G) ** 2))
    return objective


def lse_alpha_closed_form(series: ConvolvedSeries, rho, model: ModelSpec,
                          bound: SmoothingBound = DEFAULT_BOUND) -> np.ndarray:
    """Maximiser of the diffusion objective for state-independent diffusion.

    Solves ``A * f_G = mean(Q)`` entrywise, maps ``A`` back to ``alpha`` and
    clips to the box.
    """
    if not (model.constant_diffusion and model.alpha_from_A is not None):
        raise ConfigurationError(f"model {model.name} has no closed-form diffusion fit")
    _check_series(series, model)
    F = f_G_matrix(_rho_vector(rho, series.dim), bound)
    dX = np.diff(series.values, axis=1)
    mean_Q = (dX @ dX.T) / (dX.shape[1] * series.h_n)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(F > 0, mean_Q / F, 0.0)
    alpha = np.asarray(model.alpha_from_A(A), dtype=float)
    return np.clip(alpha, model.theta1_box[:, 0], model.theta1_box[:, 1])


def lse_alpha(series: ConvolvedSeries, rho, model: ModelSpec,
              bound: SmoothingBound = DEFAULT_BOUND, starts: int = 8,
              tol: float = 1e-8) -> ParamEstimate:
    obj = h1_objective(series, rho, model, bound)
    warm, cf = [], None
    if model.constant_diffusion and model.alpha_from_A is not None:
        cf = lse_alpha_closed_form(series, rho, model, bound)
        warm.append(cf)
    res = bounded_optimize(obj, model.theta1_box, starts=starts, tol=tol, extra_starts=warm)
    return ParamEstimate(res.x, res.value, res.iters, res.n_evals, res.at_boundary, cf)


def drift_lag(rho) -> int:
    """``floor(max rho) + 2``."""
    return int(math.floor(float(np.max(rho)))) + 2


class _DriftData(NamedTuple):
    y: np.ndarray       # (N, d) increments
    x: np.ndarray       # (N, d) lagged regressors
    h: float


def _drift_data(series: ConvolvedSeries, lag: int) -> _DriftData:
    n = series.n
    if n < lag:
        raise InsufficientDataError(f"need more than {lag - 1} increments for drift lag {lag}")
    dX = np.diff(series.values, axis=1)
    y = dX[:, lag - 1:].T
    x = series.values[:, :n - lag + 1].T
    return _DriftData(y, x, series.h_n)


def h2_objective(series: ConvolvedSeries, rho, model: ModelSpec,
                 fast: bool | None = None) -> Callable:
    """``beta -> -(1/h) sum_{k >= L} |dX_k - h b(X_{k-L}, beta)|^2`` with ``L = drift_lag(rho)``."""
    _check_series(series, model)
    dd = _drift_data(series, drift_lag(_rho_vector(rho, series.dim)))
    y, x, h = dd
    if fast is None:
        fast = model.drift_features is not None
    if fast:
        Phi = np.asarray(model.drift_features(x), dtype=float)
        PtP = np.einsum("kia,kib->ab", Phi, Phi)
        Pty = np.einsum("kia,ki->a", Phi, y)
        yy = float(np.sum(y * y))

        def objective(beta):
            beta = np.asarray(beta, dtype=float)
            return -(yy - 2.0 * h * float(beta @ Pty) + h * h * float(beta @ PtP @ beta)) / h
    else:
        def objective(beta):
            r = y - h * np.asarray(model.drift(x, beta), dtype=float)
            return -float(np.sum(r * r)) / h
    return objective


def lse_beta_closed_form(series: ConvolvedSeries, rho, model: ModelSpec) -> np.ndarray:
    """Box-constrained linear least squares on the lagged design (drift linear in beta)."""
    if model.drift_features is None:
        raise ConfigurationError(f"model {model.name} has no linear drift representation")
    _check_series(series, model)
    y, x, h = _drift_data(series, drift_lag(_rho_vector(rho, series.dim)))
    Phi = np.asarray(model.drift_features(x), dtype=float)
    design = h * Phi.reshape(-1, Phi.shape[-1])
    box = model.theta2_box
    lo, hi = box[:, 0].copy(), box[:, 1].copy()
    fixed = lo == hi
    target = y.reshape(-1) - design[:, fixed] @ lo[fixed]
    beta = lo.copy()
    if np.any(~fixed):
        beta[~fixed] = lsq_linear(design[:, ~fixed], target, bounds=(lo[~fixed], hi[~fixed]),
                                  method="bvls").x
    return beta


def _ols_warm_start(Phi: np.ndarray, y: np.ndarray, h: float, box: np.ndarray) -> np.ndarray:
    PtP = np.einsum("kia,kib->ab", Phi, Phi)
    Pty = np.einsum("kia,ki->a", Phi, y)
    beta = np.linalg.lstsq(PtP, Pty, rcond=None)[0] / h
    return np.clip(beta, box[:, 0], box[:, 1])


def lse_beta(series: ConvolvedSeries, rho, model: ModelSpec, starts: int = 8,
             tol: float = 1e-8) -> ParamEstimate:
    obj = h2_objective(series, rho, model)
    warm = []
    if model.drift_features is not None:
        y, x, h = _drift_data(series, drift_lag(_rho_vector(rho, series.dim)))
        warm.append(_ols_warm_start(np.asarray(model.drift_features(x), dtype=float), y, h,
                                    model.theta2_box))
    res = bounded_optimize(obj, model.theta2_box, starts=starts, tol=tol, extra_starts=warm)
    return ParamEstimate(res.x, res.value, res.iters, res.n_evals, res.at_boundary)


# --------------------------------------------------------------------------
# local Gaussian approximation baseline
# --------------------------------------------------------------------------


def lga_objective(series: ConvolvedSeries, model: ModelSpec, fast: bool | None = None) -> Callable:
    """``(alpha, beta) -> -sum_k [log det A + (1/h) A^{-1}[(dX_k - h b)^{(x)2}]]``
    evaluated at ``X_{k-1}``; the argument is ``concat(alpha, beta)``."""
    _check_series(series, model)
    if series.n < 2:
        raise InsufficientDataError("need at least two increments")
    h = series.h_n
    m1 = model.m1
    y = np.diff(series.values, axis=1).T
    x = series.values[:, :-1].T
    n = y.shape[0]
    if fast is None:
        fast = model.constant_diffusion and model.drift_features is not None
    if fast:
        Phi = np.asarray(model.drift_features(x), dtype=float)
        Syy = y.T @ y
        M1 = np.einsum("kia,kj->iaj", Phi, y)
        M2 = np.einsum("kia,kjb->iajb", Phi, Phi)
        x0 = series.values[:, 0]

        def objective(theta):
            alpha, beta = theta[:m1], theta[m1:]
            A = model.diffusion_matrix(x0, alpha)
            sign, logdet = np.linalg.slogdet(A)
            if sign <= 0:
                return -math.inf
            C = np.einsum("iaj,a->ij", M1, beta)
            S = Syy - h * (C + C.T) + h * h * np.einsum("iajb,a,b->ij", M2, beta, beta)
            return -(n * logdet + float(np.trace(np.linalg.solve(A, S))) / h)
    else:
        def objective(theta):
            alpha, beta = theta[:m1], theta[m1:]
            A = model.diffusion_matrix(x, alpha)
            sign, logdet = np.linalg.slogdet(A)
            if np.any(sign <= 0):
                return -math.inf
            r = y - h * np.asarray(model.drift(x, beta), dtype=float)
            quad = np.einsum("ki,ki->k", r, np.linalg.solve(A, r[..., None])[..., 0])
            return -(float(np.sum(logdet)) + float(np.sum(quad)) / h)
    return objective


@dataclass
class FitResult:
    """Joint estimates plus diagnostics.

    ``rho`` is the smoothing vector the fits were conditioned on (known or
    estimated); ``rho_estimate`` and ``test`` are filled when computed.
    """

    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    objective_alpha: float
    objective_beta: float
    optimizer_iters: int
    at_boundary_alpha: np.ndarray
    at_boundary_beta: np.ndarray
    rho: np.ndarray | None = None
    rho_estimate: RhoEstimate | None = None
    test: TestReport | None = None

    @property
    def at_boundary(self) -> np.ndarray:
        return np.concatenate([self.at_boundary_alpha, self.at_boundary_beta])


def lga_estimate(series: ConvolvedSeries, model: ModelSpec, starts: int = 8,
                 tol: float = 1e-8) -> FitResult:
    obj = lga_objective(series, model)
    m1 = model.m1
    box = np.vstack([model.theta1_box, model.theta2_box])
    warm = []
    if model.drift_features is not None and model.alpha_from_A is not None:
        y = np.diff(series.values, axis=1).T
        x = series.values[:, :-1].T
        Phi = np.asarray(model.drift_features(x), dtype=float)
        beta0 = _ols_warm_start(Phi, y, series.h_n, model.theta2_box)
        r = y - series.h_n * np.einsum("kia,a->ki", Phi, beta0)
        A0 = r.T @ r / (y.shape[0] * series.h_n)
        alpha0 = np.clip(np.asarray(model.alpha_from_A(A0), dtype=float),
                         model.theta1_box[:, 0], model.theta1_box[:, 1])
        warm.append(np.concatenate([alpha0, beta0]))
    res = bounded_optimize(obj, box, starts=starts, tol=tol, extra_starts=warm)
    return FitResult(alpha_hat=res.x[:m1], beta_hat=res.x[m1:], objective_alpha=res.value,
                     objective_beta=res.value, optimizer_iters=res.iters,
                     at_boundary_alpha=res.at_boundary[:m1], at_boundary_beta=res.at_boundary[m1:])


def fit(series: ConvolvedSeries, model: ModelSpec, bound: SmoothingBound = DEFAULT_BOUND,
        known_rho=None, sig_levels: Sequence[float] = DEFAULT_SIG_LEVELS,
        starts: int = 8, tol: float = 1e-8) -> FitResult:
    """Estimate ``rho`` (unless known), run the test, then fit ``alpha`` and ``beta``."""
    rho_est = estimate_rho(series, bound)
    rho = rho_est.rho_hat if known_rho is None else _rho_vector(known_rho, series.dim)
    test = smoothing_test(series, sig_levels)
    a = lse_alpha(series, rho, model, bound, starts=starts, tol=tol)
    b = lse_beta(series, rho, model, starts=starts, tol=tol)
    return FitResult(alpha_hat=a.estimate, beta_hat=b.estimate, objective_alpha=a.objective,
                     objective_beta=b.objective, optimizer_iters=a.iters + b.iters,
                     at_boundary_alpha=a.at_boundary, at_boundary_beta=b.at_boundary,
                     rho=rho, rho_estimate=rho_est, test=test)
