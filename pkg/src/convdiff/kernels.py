"""Hot numerical loops, each with a numba kernel and a pure-numpy twin.

The dispatchers at the bottom pick the implementation named by
:data:`convdiff._backend.BACKEND`.  Both variants are importable directly
(``*_numba`` / ``*_numpy``) so the parity tests and the benchmark can run
them side by side.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ._backend import USE_NUMBA, njit


# --------------------------------------------------------------------------
# Euler-Maruyama for affine drift / state-independent diffusion
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _em_affine_loop(x0, drift_mat, drift_vec, h, noise, area_noise, values, area, start):
    d = x0.shape[0]
    nsteps = noise.shape[1]
    track = area.shape[1] > 0
    x = x0.copy()
    xn = np.empty(d)
    for k in range(nsteps):
        for i in range(d):
            acc = drift_vec[i]
            for j in range(d):
                acc += drift_mat[i, j] * x[j]
            xn[i] = x[i] + acc * h + noise[i, k]
            if not math.isfinite(xn[i]):
                return start + k
        for i in range(d):
            values[i, start + k + 1] = xn[i]
            if track:
                area[i, start + k] = 0.5 * h * (x[i] + xn[i]) + area_noise[i, k]
            x[i] = xn[i]
    return -1


def em_affine_numba(x0, drift_mat, drift_vec, h, noise, area_noise, values, area, start):
    """Advance ``X <- X + (B X + c) h + noise`` in place; numba version.

    ``noise`` is the already scaled diffusion increment ``a dW`` of shape
    ``(d, steps)``.  When ``area`` has a non-zero second axis, the integral of
    the path over each step is written as the trapezoid plus ``area_noise``
    (the Brownian-bridge area term).  Returns the absolute index of the first
    non-finite step, or -1.
    """
    return _em_affine_loop(x0, drift_mat, drift_vec, h, noise, area_noise, values, area, start)


def em_affine_numpy(x0, drift_mat, drift_vec, h, noise, area_noise, values, area, start):
    """Numpy twin of :func:`em_affine_numba`.

    One-dimensional systems go through :func:`scipy.signal.lfilter` (the
    recursion is an AR(1) filter); higher dimensions fall back to a Python
    loop over steps.
    """
    d = x0.shape[0]
    nsteps = noise.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        forcing = drift_vec[:, None] * h + noise
        if d == 1:
            coef = 1.0 + drift_mat[0, 0] * h
            seg, _ = lfilter([1.0], [1.0, -coef], forcing[0], zi=[coef * x0[0]])
            seg = seg[None, :]
        else:
            seg = np.empty((d, nsteps))
            x = x0.astype(float).copy()
            for k in range(nsteps):
                x = x + (drift_mat @ x + drift_vec) * h + noise[:, k]
                seg[:, k] = x
        prev = np.concatenate([x0[:, None], seg[:, :-1]], axis=1)
        # the loop form evaluates B x on its own, which can overflow before x does
        bad = ~np.isfinite(seg) | ~np.isfinite(drift_mat @ prev)
    if bad.any():
        k = int(np.argmax(bad.any(axis=0)))
        values[:, start + 1:start + 1 + k] = seg[:, :k]
        return start + k
    values[:, start + 1:start + 1 + nsteps] = seg
    if area.shape[1] > 0:
        area[:, start:start + nsteps] = 0.5 * h * (prev + seg) + area_noise
    return -1


# --------------------------------------------------------------------------
# window sums for the convolution
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _window_sums_loop(arr, ends, width):
    out = np.empty(ends.shape[0])
    for i in range(ends.shape[0]):
        lo = ends[i] - width
        acc = 0.0
        for k in range(width):
            acc += arr[lo + k]
        out[i] = acc
    return out


def window_sums_numba(arr, ends, width):
    """``out[i] = sum(arr[ends[i] - width : ends[i]])`` summed left to right."""
    return _window_sums_loop(arr, ends, width)


def window_sums_numpy(arr, ends, width):
    acc = np.zeros(ends.shape[0])
    lo = ends - width
    for k in range(width):
        acc += arr[lo + k]
    return acc


# --------------------------------------------------------------------------
# increment statistics
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _increment_sums_loop(x):
    # Kahan-compensated sums of squared, reduced (step-2) squared and quartic increments
    n = x.shape[0] - 1
    s2 = 0.0
    c2 = 0.0
    s4 = 0.0
    c4 = 0.0
    sr = 0.0
    cr = 0.0
    for k in range(1, n + 1):
        dx = x[k] - x[k - 1]
        q = dx * dx
        y = q - c2
        t = s2 + y
        c2 = (t - s2) - y
        s2 = t
        y = q * q - c4
        t = s4 + y
        c4 = (t - s4) - y
        s4 = t
        if k % 2 == 0:
            dr = x[k] - x[k - 2]
            y = dr * dr - cr
            t = sr + y
            cr = (t - sr) - y
            sr = t
    return s2, sr, s4


def increment_sums_numba(x):
    """Return ``(sum dX^2, sum over even k of (X_k - X_{k-2})^2, sum dX^4)``."""
    return _increment_sums_loop(x)


def increment_sums_numpy(x):
    dx = np.diff(x)
    q = dx * dx
    red = x[2::2] - x[:-2:2] if x.shape[0] >= 3 else np.empty(0)
    return math.fsum(q), math.fsum(red * red), math.fsum(q * q)


# --------------------------------------------------------------------------
# realised volatility with subsampling
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _rv_curve_loop(y, k_max):
    n = y.shape[0] - 1
    out = np.empty(k_max)
    for k in range(1, k_max + 1):
        m = n // k
        s = 0.0
        c = 0.0
        for i in range(1, m + 1):
            d = y[i * k] - y[(i - 1) * k]
            v = d * d - c
            t = s + v
            c = (t - s) - v
            s = t
        out[k - 1] = s
    return out


def rv_curve_numba(y, k_max):
    """``RV(k)`` for ``k = 1..k_max`` as a float array of length ``k_max``."""
    return _rv_curve_loop(y, k_max)


def rv_curve_numpy(y, k_max):
    n = y.shape[0] - 1
    out = np.empty(k_max)
    for k in range(1, k_max + 1):
        m = n // k
        d = np.diff(y[0:m * k + 1:k])
        out[k - 1] = math.fsum(d * d)
    return out


if USE_NUMBA:
    em_affine = em_affine_numba
    window_sums = window_sums_numba
    increment_sums = increment_sums_numba
    rv_curve = rv_curve_numba
else:
    em_affine = em_affine_numpy
    window_sums = window_sums_numpy
    increment_sums = increment_sums_numpy
    rv_curve = rv_curve_numpy
