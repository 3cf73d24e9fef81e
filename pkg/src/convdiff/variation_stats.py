"""Quadratic variation statistics of an observed series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .conv_obs import ConvolvedSeries
from .errors import DegenerateStatisticError, InsufficientDataError, RangeError


@dataclass(frozen=True)
class VariationSummary:
    """Per-axis increment sums at step ``h_n``.

    ``full_qv = sum(dX^2) / (n h)`` over all ``n`` increments and
    ``reduced_qv`` is the same normalisation applied to the step-two
    increments ``X_{2k} - X_{2k-2}`` for ``2 <= 2k <= n``.
    """

    axis: int
    full_qv: float
    reduced_qv: float
    quartic_sum: float
    n_used: int
    n_pairs: int
    h_n: float

    @property
    def full_sum(self) -> float:
        return self.full_qv * self.n_used * self.h_n

    @property
    def reduced_sum(self) -> float:
        return self.reduced_qv * self.n_used * self.h_n


def variations(series: ConvolvedSeries, axis: int = 0) -> VariationSummary:
    x = np.ascontiguousarray(series.axis(axis))
    n = series.n
    if n < 4:
        raise InsufficientDataError(f"need at least 4 increments, got {n}")
    s2, sr, s4 = kernels.increment_sums(x)
    norm = n * series.h_n
    return VariationSummary(axis=axis, full_qv=s2 / norm, reduced_qv=sr / norm,
                            quartic_sum=s4, n_used=n, n_pairs=n // 2, h_n=series.h_n)


def ratio_Rn(summary: VariationSummary) -> float:
    """``R_n = full_qv / reduced_qv``."""
    if not summary.reduced_qv > 0:
        raise DegenerateStatisticError(
            f"axis {summary.axis}: reduced quadratic variation is zero")
    return summary.full_qv / summary.reduced_qv


def rv_curve(series: ConvolvedSeries, axis: int, k_max: int) -> list[tuple[int, float]]:
    """``RV(k) = sum_{1 <= i <= n//k} (Y_{ik} - Y_{(i-1)k})^2`` for ``k = 1..k_max``."""
    k_max = int(k_max)
    if not 1 <= k_max <= series.n:
        raise RangeError(f"k_max must lie in [1, {series.n}], got {k_max}")
    y = np.ascontiguousarray(series.axis(axis))
    rv = kernels.rv_curve(y, k_max)
    return [(k, float(rv[k - 1])) for k in range(1, k_max + 1)]


def rv_slope(curve: list[tuple[int, float]]) -> tuple[float, float]:
    """OLS slope of ``RV(k)`` on ``k`` and its classical standard error."""
    k = np.array([c[0] for c in curve], dtype=float)
    rv = np.array([c[1] for c in curve], dtype=float)
    if k.size < 3:
        raise InsufficientDataError("need at least three points for a slope")
    kc = k - k.mean()
    sxx = float(kc @ kc)
    slope = float(kc @ (rv - rv.mean())) / sxx
    resid = rv - rv.mean() - slope * kc
    se = float(np.sqrt(resid @ resid / (k.size - 2) / sxx))
    return slope, se
