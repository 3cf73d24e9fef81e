"""Euler-Maruyama simulation of the latent diffusion and the built-in OU models.

The simulator runs ``dX = b(X, beta) dt + a(X, alpha) dW`` on a fine grid,
starting ``burn_in`` time units before zero.  Besides the grid values it
records, per fine step, the integral of the path over that step (trapezoid
plus the Brownian-bridge area with frozen diffusion), so that smoothed
observations can be formed without Riemann-sum bias.

Random streams are numpy ``Philox`` generators (counter based).  A run is
keyed by ``(seed, stream)``; replication ``r`` of a study uses stream ``r``
of the study seed, so distinct seeds never share replications.  The key's
``SeedSequence`` is split in two: child 0 drives the Wiener increments and
child 1 the bridge areas, so switching area tracking on or off leaves the
path itself unchanged.  Normal variates come from numpy's ziggurat sampler.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError, SimulationError

CHUNK_STEPS = 1 << 19


@dataclass(frozen=True)
class ModelSpec:
    """Drift/diffusion pair with parameter boxes.

    ``drift(x, beta)`` maps states of shape ``(..., d)`` to ``(..., d)`` and
    ``diffusion(x, alpha)`` maps them to ``(..., d, r)``.  The optional hooks
    describe structure the estimators and the simulator exploit:

    * ``affine_drift(beta) -> (B, c)`` with ``b(x, beta) = B x + c``;
    * ``drift_features(x) -> Phi`` of shape ``(..., d, m2)`` with
      ``b(x, beta) = Phi(x) @ beta``;
    * ``constant_diffusion``: ``a(x, alpha)`` does not depend on ``x``;
    * ``alpha_from_A(A) -> alpha`` inverting ``A = a a^T`` for such models.
    """

    name: str
    dim_d: int
    dim_r: int
    drift: Callable
    diffusion: Callable
    theta1_box: np.ndarray
    theta2_box: np.ndarray
    affine_drift: Callable | None = None
    drift_features: Callable | None = None
    constant_diffusion: bool = False
    alpha_from_A: Callable | None = None

    def __post_init__(self):
        for box_name in ("theta1_box", "theta2_box"):
            box = np.asarray(getattr(self, box_name), dtype=float)
            if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 0] > box[:, 1]):
                raise ConfigurationError(f"{box_name} must be an (m, 2) array with low <= high")
            object.__setattr__(self, box_name, box)

    @property
    def m1(self) -> int:
        return self.theta1_box.shape[0]

    @property
    def m2(self) -> int:
        return self.theta2_box.shape[0]

    def diffusion_matrix(self, x, alpha) -> np.ndarray:
        """``A(x, alpha) = a a^T`` with shape ``(..., d, d)``."""
        a = self.diffusion(x, alpha)
        return np.einsum("...ik,...jk->...ij", a, a)

    def check_params(self, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        if alpha.shape != (self.m1,) or beta.shape != (self.m2,):
            raise ConfigurationError(
                f"{self.name}: expected alpha of length {self.m1} and beta of length {self.m2}")
        return alpha, beta


@dataclass(frozen=True)
class SimConfig:
    n_fine: int
    h_fine: float
    burn_in: float = 0.0
    seed: int = 0
    x_init: np.ndarray | None = None
    track_area: bool = True
    stream: int | None = None

    def __post_init__(self):
        if self.n_fine < 1:
            raise ConfigurationError("n_fine must be positive")
        if not (self.h_fine > 0 and math.isfinite(self.h_fine)):
            raise ConfigurationError("h_fine must be positive")
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be non-negative")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.stream is not None and int(self.stream) < 0:
            raise ConfigurationError("stream must be non-negative")

    @property
    def n_burn(self) -> int:
        return int(math.ceil(self.burn_in / self.h_fine - 1e-9))


@dataclass(frozen=True)
class SamplePath:
    """Uniform-grid trajectory; column ``k`` sits at ``origin_time + k*h``.

    ``values`` has shape ``(d, N+1)``.  ``area`` is either ``None`` or has
    shape ``(d, N)`` with the integral of the path over each fine step.
    """

    h: float
    origin_time: float
    values: np.ndarray
    area: np.ndarray | None = field(default=None)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.origin_time + self.h * np.arange(self.values.shape[1])

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not (close to) a grid point."""
        k = (t - self.origin_time) / self.h
        ki = int(round(k))
        if abs(k - ki) > 1e-6 or not (0 <= ki <= self.n_steps):
            raise ConfigurationError(f"time {t} is not on the path grid")
        return ki

    def to_csv(self, path) -> None:
        """Write ``time,value_1,...,value_d`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"value_{i + 1}" for i in range(self.dim)])
            for t, row in zip(self.times, self.values.T):
                w.writerow([f"{t:.15g}"] + [f"{v:.15g}" for v in row])


def seed_sequence(seed: int, stream: int | None = None) -> np.random.SeedSequence:
    """``SeedSequence`` for stream ``stream`` of ``seed`` (the bare seed when ``None``)."""
    if stream is None:
        return np.random.SeedSequence(int(seed))
    return np.random.SeedSequence(int(seed), spawn_key=(int(stream),))


def make_streams(seed: int, stream: int | None = None
                 ) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for Wiener increments and bridge areas."""
    inc, area = seed_sequence(seed, stream).spawn(2)
    return np.random.Generator(np.random.Philox(inc)), np.random.Generator(np.random.Philox(area))


def euler_maruyama(model: ModelSpec, alpha, beta, cfg: SimConfig) -> SamplePath:
    """Simulate the model on ``[-burn_in, n_fine*h_fine]``.

    Affine-drift models with state-independent diffusion run through the
    compiled kernel; any other model goes through a generic step loop that
    calls ``drift``/``diffusion`` once per step.
    """
    alpha, beta = model.check_params(alpha, beta)
    d, r = model.dim_d, model.dim_r
    n_total = cfg.n_burn + cfg.n_fine
    h = cfg.h_fine
    x0 = np.zeros(d) if cfg.x_init is None else np.asarray(cfg.x_init, dtype=float).reshape(d)

    values = np.empty((d, n_total + 1))
    values[:, 0] = x0
    area = np.empty((d, n_total)) if cfg.track_area else None
    g_inc, g_area = make_streams(cfg.seed, cfg.stream)

    fast = model.affine_drift is not None and model.constant_diffusion
    if fast:
        drift_mat, drift_vec = (np.asarray(v, dtype=float) for v in model.affine_drift(beta))
        drift_mat = np.ascontiguousarray(drift_mat.reshape(d, d))
        drift_vec = np.ascontiguousarray(drift_vec.reshape(d))
        a = np.asarray(model.diffusion(x0, alpha), dtype=float).reshape(d, r)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(drift_mat))
                and np.all(np.isfinite(drift_vec))):
            raise SimulationError("non-finite drift or diffusion coefficients", step=0)
    area_buf = area if area is not None else np.empty((d, 0))
    sq = math.sqrt(h)
    bridge = math.sqrt(h ** 3 / 12.0)

    start = 0
    while start < n_total:
        steps = min(CHUNK_STEPS, n_total - start)
        z1 = g_inc.standard_normal((r, steps))
        z2 = g_area.standard_normal((r, steps)) if area is not None else None
        if fast:
            noise = np.ascontiguousarray(sq * (a @ z1))
            area_noise = (np.ascontiguousarray(bridge * (a @ z2)) if z2 is not None
                          else np.empty((d, 0)))
            bad = kernels.em_affine(values[:, start].copy(), drift_mat, drift_vec, h,
                                    noise, area_noise, values, area_buf, start)
            if bad >= 0:
                raise SimulationError(f"non-finite state at step {bad}", step=bad)
        else:
            _generic_chunk(model, alpha, beta, h, z1, z2, values, area, start)
        start += steps

    return SamplePath(h=h, origin_time=-cfg.n_burn * h, values=values, area=area)


def _generic_chunk(model, alpha, beta, h, z1, z2, values, area, start):
    sq = math.sqrt(h)
    bridge = math.sqrt(h ** 3 / 12.0)
    x = values[:, start].copy()
    for k in range(z1.shape[1]):
        b = np.asarray(model.drift(x, beta), dtype=float)
        a = np.asarray(model.diffusion(x, alpha), dtype=float)
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise SimulationError(f"non-finite drift/diffusion at step {start + k}",
                                  step=start + k)
        xn = x + b * h + sq * (a @ z1[:, k])
        if not np.all(np.isfinite(xn)):
            raise SimulationError(f"non-finite state at step {start + k}", step=start + k)
        values[:, start + k + 1] = xn
        if area is not None:
            area[:, start + k] = 0.5 * h * (x + xn) + bridge * (a @ z2[:, k])
        x = xn


# --------------------------------------------------------------------------
# built-in models
# --------------------------------------------------------------------------


def _sym_sqrt(A: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (A + A.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def ou_1d(theta1_box=((0.01, 10.0),), theta2_box=((-10.0, -0.01), (-10.0, 10.0))) -> ModelSpec:
    """``dX = (beta1 X + beta2) dt + alpha dW``."""

    def drift(x, beta):
        x = np.asarray(x, dtype=float)
        return beta[0] * x + beta[1]

    def diffusion(x, alpha):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), float(alpha[0]))

    def features(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (2,))
        out[..., 0] = x
        out[..., 1] = 1.0
        return out

    return ModelSpec(
        name="ou1d", dim_d=1, dim_r=1, drift=drift, diffusion=diffusion,
        theta1_box=np.array(theta1_box, dtype=float),
        theta2_box=np.array(theta2_box, dtype=float),
        affine_drift=lambda beta: (np.array([[beta[0]]]), np.array([beta[1]])),
        drift_features=features,
        constant_diffusion=True,
        alpha_from_A=lambda A: np.array([math.sqrt(max(float(np.asarray(A).reshape(-1)[0]), 0.0))]),
    )


_EPS8 = 1e-8


def ou_2d(theta1_box=((1 + _EPS8, 10.0), (-1 + _EPS8, 1 - _EPS8), (1 + _EPS8, 10.0)),
          theta2_box=((-10.0, 10.0),) * 6) -> ModelSpec:
    """Two-dimensional OU with drift rows ``(b1 b2 | b3)``, ``(b4 b5 | b6)``
    and symmetric diffusion ``[[a1, a2], [a2, a3]]``."""

    def drift(x, beta):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([beta[0] * x1 + beta[1] * x2 + beta[2],
                         beta[3] * x1 + beta[4] * x2 + beta[5]], axis=-1)

    def diffusion(x, alpha):
        x = np.asarray(x, dtype=float)
        a = np.array([[alpha[0], alpha[1]], [alpha[1], alpha[2]]], dtype=float)
        return np.broadcast_to(a, x.shape[:-1] + (2, 2)).copy()

    def affine(beta):
        return (np.array([[beta[0], beta[1]], [beta[3], beta[4]]]),
                np.array([beta[2], beta[5]]))

    def features(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 6))
        out[..., 0, 0] = x[..., 0]
        out[..., 0, 1] = x[..., 1]
        out[..., 0, 2] = 1.0
        out[..., 1, 3] = x[..., 0]
        out[..., 1, 4] = x[..., 1]
        out[..., 1, 5] = 1.0
        return out

    def alpha_from_A(A):
        s = _sym_sqrt(np.asarray(A, dtype=float))
        return np.array([s[0, 0], s[0, 1], s[1, 1]])

    return ModelSpec(
        name="ou2d", dim_d=2, dim_r=2, drift=drift, diffusion=diffusion,
        theta1_box=np.array(theta1_box, dtype=float),
        theta2_box=np.array(theta2_box, dtype=float),
        affine_drift=affine, drift_features=features,
        constant_diffusion=True, alpha_from_A=alpha_from_A,
    )


MODELS = {"ou1d": ou_1d, "ou2d": ou_2d}


def get_model(name: str, **boxes) -> ModelSpec:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ConfigurationError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**{k: v for k, v in boxes.items() if v is not None})
