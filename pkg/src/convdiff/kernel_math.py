"""Closed-form constants of the uniform smoothing kernel and their quadrature oracles.

Everything here is a pure function of its arguments.  Smoothing parameters
are dimensionless multiples of the sampling step; the upper bound ``rho_bar``
must exceed 2 because the ratio function below is only defined piecewise for
that case.

The two quadrature oracles evaluate the defining double integrals

    G(i, j)  = int int min(s, s') dU_i(s) dU_j(s')
    D0(i, j) = int int min(s, s') dV_i(s) dU_j(s')

numerically, where ``V_i`` is the kernel placed at time ``p`` and
``U_i = V_i(. at p+1) - V_i(. at p)`` is its one-step increment.  Dirac
atoms (``rho = 0``) are integrated exactly; uniform pieces use the midpoint
rule on cells aligned with the kernel support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

DEFAULT_RHO_BAR = 100.0


@dataclass(frozen=True)
class SmoothingBound:
    """Upper bound of every smoothing coordinate, ``Theta_rho = [0, rho_bar]^d``."""

    rho_bar: float = DEFAULT_RHO_BAR

    def __post_init__(self):
        if not (math.isfinite(self.rho_bar) and self.rho_bar > 2.0):
            raise DomainError(f"rho_bar must be a finite number > 2, got {self.rho_bar!r}")

    @property
    def ratio_min(self) -> float:
        """Smallest attainable value of :func:`ratio_R`, reached at ``rho_bar``."""
        rb = self.rho_bar
        return (3.0 * rb - 1.0) / (6.0 * rb - 4.0)


DEFAULT_BOUND = SmoothingBound()


class PiecewiseValue(NamedTuple):
    value: float
    branch_id: int


def _check_rho(rho: float, bound: SmoothingBound, name: str = "rho") -> float:
    rho = float(rho)
    if not (0.0 <= rho <= bound.rho_bar):
        raise DomainError(f"{name}={rho!r} outside [0, {bound.rho_bar}]")
    return rho


# --------------------------------------------------------------------------
# f_G: entrywise shrinkage of the limiting quadratic covariation
# --------------------------------------------------------------------------


def _fg_branch(a: float, b: float) -> int:
    # Branch ids 1..15 follow the order of the piecewise table.
    if a == 0.0 and b == 0.0:
        return 1
    if a == 0.0:
        return 2 if b <= 1.0 else 3
    if b == 0.0:
        return 4 if a <= 1.0 else 5
    if a <= 1.0 and b <= 1.0:
        return 6 if a > b else 7
    if a > 1.0 and b <= 1.0:
        return 8 if a > b + 1.0 else 10
    if a <= 1.0 and b > 1.0:
        return 14 if b > a + 1.0 else 12
    # both in (1, rho_bar]
    if a > b + 1.0:
        return 9
    if b < a:
        return 11
    if b <= a + 1.0:
        return 13
    return 15


def _fg_formula(branch: int, a: float, b: float) -> float:
    ab6 = 6.0 * a * b
    if branch == 1:
        return 1.0
    if branch == 2:
        return 1.0 - b / 2.0
    if branch == 3:
        return 1.0 / (2.0 * b)
    if branch == 4:
        return 1.0 - a / 2.0
    if branch == 5:
        return 1.0 / (2.0 * a)
    # Branches where a or b may be tiny are written with the common factor
    # cancelled, so that subnormal arguments do not underflow 6ab to zero.
    if branch == 6:
        return 1.0 + (b - a) / 2.0 - b * (b / a) / 3.0
    if branch == 7:
        return 1.0 + (a - b) / 2.0 - a * (a / b) / 3.0
    if branch == 8:
        return (3.0 * b + 3.0 - b * b) / (6.0 * a)
    if branch == 9:
        return (6.0 * b - 1.0) / ab6
    if branch == 10:
        w = (a - 1.0) - b
        return (3.0 + 3.0 * b - b * b + w * w * (w / b)) / (6.0 * a)
    if branch == 11:
        return ((a - b) ** 3 - 3.0 * a * a + 6.0 * a * b + 3.0 * a
                - 3.0 * b * b + 3.0 * b - 2.0) / ab6
    if branch == 12:
        w = (b - 1.0) - a
        return (3.0 + 3.0 * a - a * a + w * w * (w / a)) / (6.0 * b)
    if branch == 13:
        return (-(a - b) ** 3 - 3.0 * a * a - 3.0 * b * b + 6.0 * a * b
                + 3.0 * a + 3.0 * b - 2.0) / ab6
    if branch == 14:
        return (3.0 * a + 3.0 - a * a) / (6.0 * b)
    if branch == 15:
        return (6.0 * a - 1.0) / ab6
    raise AssertionError(branch)


# lower-triangle branch -> the branch that (b, a) falls into
_FG_MIRROR = {4: 2, 5: 3, 6: 7, 8: 14, 9: 15, 10: 12, 11: 13}


def f_G(rho_i: float, rho_j: float, bound: SmoothingBound = DEFAULT_BOUND) -> PiecewiseValue:
    """Shrinkage factor of the ``(i, j)`` entry of the limiting increment covariance.

    ``branch_id`` reports the table case fired by ``(rho_i, rho_j)``.  Cases
    with ``rho_i > rho_j`` are evaluated through their mirror case at
    ``(rho_j, rho_i)`` so that ``f_G(a, b) == f_G(b, a)`` holds bit for bit.

    Examples
    --------
    >>> f_G(0.0, 0.0)
    PiecewiseValue(value=1.0, branch_id=1)
    >>> round(f_G(2.0, 2.0).value, 12) == round(5 / 12, 12)
    True
    """
    a = _check_rho(rho_i, bound, "rho_i")
    b = _check_rho(rho_j, bound, "rho_j")
    branch = _fg_branch(a, b)
    if branch in _FG_MIRROR:
        return PiecewiseValue(_fg_formula(_FG_MIRROR[branch], b, a), branch)
    return PiecewiseValue(_fg_formula(branch, a, b), branch)


def f_G_literal(rho_i: float, rho_j: float, bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Evaluate the fired table case directly, without the mirror trick."""
    a = _check_rho(rho_i, bound, "rho_i")
    b = _check_rho(rho_j, bound, "rho_j")
    return _fg_formula(_fg_branch(a, b), a, b)


def f_G_matrix(rho, bound: SmoothingBound = DEFAULT_BOUND) -> np.ndarray:
    """``F[i, j] = f_G(rho[i], rho[j])`` for a smoothing vector ``rho``."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    d = rho.shape[0]
    out = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            out[i, j] = f_G(rho[i], rho[j], bound).value
    return out


# --------------------------------------------------------------------------
# f_D0: lag-0 covariance between a smoothed level and the next increment
# --------------------------------------------------------------------------


def f_D0(rho_i: float, rho_j: float, bound: SmoothingBound = DEFAULT_BOUND) -> PiecewiseValue:
    """Factor of the lag-0 cross term; not symmetric in its arguments.

    >>> f_D0(1.0, 1.0).value == 1 / 6
    True
    """
    a = _check_rho(rho_i, bound, "rho_i")
    b = _check_rho(rho_j, bound, "rho_j")
    if b == 0.0:
        return PiecewiseValue(0.0, 1)
    if a == 0.0:
        if b <= 1.0:
            return PiecewiseValue(b / 2.0, 2)
        return PiecewiseValue((2.0 * b - 1.0) / (2.0 * b), 3)
    # forms with the factor a cancelled stay finite for subnormal a
    if b > 1.0:
        if a + 1.0 < b:
            return PiecewiseValue(1.0 - (a + 1.0) / (2.0 * b), 4)
        if a < b:
            v = b - 1.0
            w = a - v
            return PiecewiseValue((3.0 + 3.0 * (v - w) + w * w * (w / a)) / (6.0 * b), 5)
        return PiecewiseValue((3.0 * b * b - 3.0 * b + 1.0) / (6.0 * a * b), 6)
    if a < b:
        return PiecewiseValue(a * (a / b) / 6.0 + (b - a) / 2.0, 7)
    return PiecewiseValue(b * (b / a) / 6.0, 8)


# --------------------------------------------------------------------------
# quadratic-variation limits and their ratio
# --------------------------------------------------------------------------


def full_qv_limit(rho: float, bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Limit factor of the full quadratic variation; equals ``f_G(rho, rho)``."""
    rho = _check_rho(rho, bound)
    if rho == 0.0:
        return 1.0
    if rho <= 1.0:
        return 1.0 - rho / 3.0
    return 1.0 / rho - 1.0 / (3.0 * rho * rho)


def reduced_qv_limit(rho: float, bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Limit factor of the step-2 (reduced) quadratic variation."""
    rho = _check_rho(rho, bound)
    if rho == 0.0:
        return 1.0
    if rho <= 2.0:
        return 1.0 - rho / 6.0
    return 2.0 / rho - 4.0 / (3.0 * rho * rho)


def ratio_R(rho: float, bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Limit of full over reduced quadratic variation; strictly decreasing in ``rho``."""
    y = _check_rho(rho, bound)
    if y == 0.0:
        return 1.0
    if y <= 1.0:
        return (6.0 - 2.0 * y) / (6.0 - y)
    if y <= 2.0:
        return (6.0 * y - 2.0) / (6.0 * y * y - y ** 3)
    return (3.0 * y - 1.0) / (6.0 * y - 4.0)


def _ratio_middle(y: float) -> float:
    return (6.0 * y - 2.0) / (6.0 * y * y - y ** 3)


def ratio_R_inverse(x: float, bound: SmoothingBound = DEFAULT_BOUND, tol: float = 1e-12) -> float:
    """Invert :func:`ratio_R` on ``[bound.ratio_min, 1]``.

    The outer branches are solved in closed form; the cubic middle branch on
    ``(1, 2]`` is solved by bisection down to ``tol``.
    """
    x = float(x)
    lo_x = bound.ratio_min
    if not (lo_x <= x <= 1.0):
        raise DomainError(f"x={x!r} outside the range [{lo_x}, 1] of R")
    if x > 0.8:
        return 6.0 * (1.0 - x) / (2.0 - x)
    if x > 0.625:
        if x == 0.8:
            return 1.0
        lo, hi = 1.0, 2.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _ratio_middle(mid) > x:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    y = (4.0 * x - 1.0) / (6.0 * x - 3.0)
    return min(y, bound.rho_bar)


# --------------------------------------------------------------------------
# standard normal distribution
# --------------------------------------------------------------------------


def gaussian_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def gaussian_quantile(p: float, tol: float = 1e-12) -> float:
    """Inverse of :func:`gaussian_cdf` by bisection on ``[-40, 40]``."""
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"p={p!r} must lie in (0, 1)")
    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gaussian_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# quadrature oracles
# --------------------------------------------------------------------------


class _Measure(NamedTuple):
    nodes: np.ndarray
    weights: np.ndarray


def _kernel_pieces(rho: float, at: float, sign: float):
    """Signed pieces of the kernel measure ``s -> V_rho(at - s)``."""
    if rho == 0.0:
        return [("atom", at, sign)]
    return [("uniform", at - rho, at, sign / rho)]


def _discretize(pieces, n_grid: int) -> _Measure:
    total = sum(p[2] - p[1] for p in pieces if p[0] == "uniform")
    nodes, weights = [], []
    for p in pieces:
        if p[0] == "atom":
            nodes.append(np.array([p[1]]))
            weights.append(np.array([p[2]]))
            continue
        _, lo, hi, dens = p
        m = max(16, int(round(n_grid * (hi - lo) / total)))
        dx = (hi - lo) / m
        nodes.append(lo + (np.arange(m) + 0.5) * dx)
        weights.append(np.full(m, dens * dx))
    return _Measure(np.concatenate(nodes), np.concatenate(weights))


def _min_kernel_integral(mu: _Measure, nu: _Measure) -> float:
    """``sum_i sum_j mu_w[i] nu_w[j] min(mu_x[i], nu_x[j])`` in O(n log n)."""
    order = np.argsort(nu.nodes, kind="stable")
    y = nu.nodes[order]
    v = nu.weights[order]
    below = np.concatenate([[0.0], np.cumsum(v * y)])
    above = np.concatenate([np.cumsum(v[::-1])[::-1], [0.0]])
    idx = np.searchsorted(y, mu.nodes, side="right")
    inner = below[idx] + mu.nodes * above[idx]
    return float(np.dot(mu.weights, inner))


def _anchor(rho_i: float, rho_j: float, bound: SmoothingBound) -> float:
    return float(math.floor(bound.rho_bar) + 1)


def _increment_measure(rho: float, p: float, n_grid: int) -> _Measure:
    return _discretize(_kernel_pieces(rho, p + 1.0, 1.0) + _kernel_pieces(rho, p, -1.0), n_grid)


def oracle_G_quadrature(rho_i: float, rho_j: float, n_grid: int = 100_000,
                        bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Numerical value of the increment covariance factor; independent of :func:`f_G`."""
    a = _check_rho(rho_i, bound, "rho_i")
    b = _check_rho(rho_j, bound, "rho_j")
    if n_grid < 1000:
        raise DomainError("n_grid must be at least 1000")
    p = _anchor(a, b, bound)
    return _min_kernel_integral(_increment_measure(a, p, n_grid), _increment_measure(b, p, n_grid))


def oracle_D0_quadrature(rho_i: float, rho_j: float, n_grid: int = 100_000,
                         bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Numerical value of the lag-0 cross factor; independent of :func:`f_D0`."""
    a = _check_rho(rho_i, bound, "rho_i")
    b = _check_rho(rho_j, bound, "rho_j")
    if n_grid < 1000:
        raise DomainError("n_grid must be at least 1000")
    p = _anchor(a, b, bound)
    level = _discretize(_kernel_pieces(a, p, 1.0), n_grid)
    return _min_kernel_integral(level, _increment_measure(b, p, n_grid))


def oracle_K_quadrature(rho_i: float, rho_j: float, n_grid: int = 100_000,
                        bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """Numerical ``G + D0``: the next smoothed level against the next increment."""
    a = _check_rho(rho_i, bound, "rho_i")
    b = _check_rho(rho_j, bound, "rho_j")
    p = _anchor(a, b, bound)
    level = _discretize(_kernel_pieces(a, p + 1.0, 1.0), n_grid)
    return _min_kernel_integral(level, _increment_measure(b, p, n_grid))


def oracle_B_quadrature(rho: float, n_grid: int = 100_000,
                        bound: SmoothingBound = DEFAULT_BOUND) -> float:
    """``int (V(p+1-s) - V(p-s)) s ds``; equals one for every ``rho``."""
    r = _check_rho(rho, bound)
    m = _increment_measure(r, _anchor(r, r, bound), n_grid)
    return float(np.dot(m.weights, m.nodes))


def kernel_table(grid, n_grid: int = 20_000, bound: SmoothingBound = DEFAULT_BOUND):
    """Rows ``(rho_i, rho_j, f_G, branch_G, f_D0, branch_D0, oracle_G, oracle_D0)``."""
    rows = []
    for a in grid:
        for b in grid:
            g = f_G(a, b, bound)
            d0 = f_D0(a, b, bound)
            rows.append((float(a), float(b), g.value, g.branch_id, d0.value, d0.branch_id,
                         oracle_G_quadrature(a, b, n_grid, bound),
                         oracle_D0_quadrature(a, b, n_grid, bound)))
    return rows
