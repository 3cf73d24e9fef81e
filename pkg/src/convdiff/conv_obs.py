"""Convolutional observations of a fine-grid path.

Observation ``i`` on axis ``l`` is the mean of the latent path over the
window ``(i*h_n - rho_l*h_n, i*h_n]`` (or the point value when
``rho_l = 0``).  The window holds ``K = round(rho_l * h_n / h)`` fine steps.

When the path carries per-step integrals (``SamplePath.area``, produced by
the simulator) the window mean is exact up to the Euler scheme.  Otherwise
it is the mean of the ``K`` most recent fine samples, which is a Riemann sum
with an ``O(h)`` bias.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DataError, RangeError
from .sde_sim import SamplePath

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvolvedSeries:
    """Observed series; ``values[:, i]`` is the observation at time ``i*h_n``.

    ``rho`` holds the smoothing used to generate the series, or NaN entries
    when unknown (real data).
    """

    h_n: float
    rho: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if rho.shape == (1,) and vals.shape[0] > 1:
            rho = np.full(vals.shape[0], rho[0])
        if rho.shape != (vals.shape[0],):
            raise ConfigurationError("rho must have one entry per axis")
        if not (self.h_n > 0 and math.isfinite(self.h_n)):
            raise ConfigurationError("h_n must be positive")
        if not np.all(np.isfinite(vals)):
            raise DataError("series contains non-finite values")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        """Number of increments (the series has ``n + 1`` points)."""
        return self.values.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.h_n * np.arange(self.n + 1)

    def axis(self, i: int) -> np.ndarray:
        if not (0 <= i < self.dim):
            raise RangeError(f"axis {i} out of range for a {self.dim}-dimensional series")
        return self.values[i]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(self.dim)])
            for t, row in zip(self.times, self.values.T):
                w.writerow([f"{t:.15g}"] + [f"{v:.15g}" for v in row])


def read_series_csv(path, h_n: float | None = None, rho=None) -> ConvolvedSeries:
    """Inverse of :meth:`ConvolvedSeries.to_csv`.

    ``h_n`` defaults to the spacing of the ``t`` column.
    """
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read series from {path}: {exc}") from exc
    if raw.shape[1] < 2 or raw.shape[0] < 2:
        raise DataError(f"{path}: need a t column, at least one value column and two rows")
    t, vals = raw[:, 0], raw[:, 1:].T
    if h_n is None:
        h_n = float(t[1] - t[0])
    d = vals.shape[0]
    rho = np.full(d, np.nan) if rho is None else rho
    return ConvolvedSeries(h_n=float(h_n), rho=rho, values=vals)


def steps_per_obs(path_h: float, h_n: float) -> int:
    ratio = h_n / path_h
    s = int(round(ratio))
    if s < 1 or abs(ratio - s) > 1e-8 * max(1.0, ratio):
        raise ConfigurationError(f"h_n={h_n} is not an integer multiple of the path step {path_h}")
    return s


def window_length(rho: float, h_n: float, path_h: float) -> int:
    """``K = round(rho*h_n/h)`` with halves rounded up."""
    return int(math.floor(rho * h_n / path_h + 0.5))


def convolve(path: SamplePath, rho, h_n: float, n: int | None = None) -> ConvolvedSeries:
    """Smoothed observations at times ``0, h_n, ..., n*h_n``.

    ``n`` defaults to the largest count that fits in the path after time 0.
    """
    d = path.dim
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if rho.shape == (1,) and d > 1:
        rho = np.full(d, rho[0])
    if rho.shape != (d,) or np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise ConfigurationError("rho must be a non-negative vector with one entry per axis")
    s = steps_per_obs(path.h, h_n)
    i0 = path.index_of(0.0)
    n_max = (path.n_steps - i0) // s
    if n is None:
        n = n_max
    if n < 1 or n > n_max:
        raise RangeError(f"requested {n} observations but the path only supports {n_max}")
    ends = i0 + s * np.arange(n + 1, dtype=np.int64)

    out = np.empty((d, n + 1))
    for ax in range(d):
        K = window_length(rho[ax], h_n, path.h) if rho[ax] > 0 else 0
        if rho[ax] > 0 and K < 1:
            log.warning("axis %d: window rho*h_n=%g is shorter than half a fine step; "
                        "using direct observation", ax, rho[ax] * h_n)
        if K < 1:
            out[ax] = path.values[ax, ends]
        elif path.area is not None:
            if ends[0] - K < 0:
                raise RangeError(f"axis {ax}: window of {K} steps reaches before the path start")
            arr = np.ascontiguousarray(path.area[ax])
            out[ax] = kernels.window_sums(arr, ends, K) / (K * path.h)
        else:
            if ends[0] + 1 - K < 0:
                raise RangeError(f"axis {ax}: window of {K} samples reaches before the path start")
            arr = np.ascontiguousarray(path.values[ax])
            out[ax] = kernels.window_sums(arr, ends + 1, K) / K
    return ConvolvedSeries(h_n=h_n, rho=rho, values=out)


def subsample(series: ConvolvedSeries, k: int) -> ConvolvedSeries:
    """Every ``k``-th observation, with step ``k*h_n``."""
    k = int(k)
    if k < 1:
        raise ConfigurationError("k must be positive")
    if k > series.n:
        raise RangeError(f"k={k} exceeds the number of increments {series.n}")
    return ConvolvedSeries(h_n=series.h_n * k, rho=series.rho / k,
                           values=series.values[:, ::k].copy())
