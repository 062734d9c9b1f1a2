"""Ornstein-Uhlenbeck noise channels and reproducible random streams.

Each channel is stationary Gaussian with autocorrelation
``sigma**2 * exp(-|t - t'| / tau_c)``. Updates use the exact transition
density, so step size never biases the statistics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OUParams:
    """Standard deviation ``sigma`` and correlation time ``tau_c`` (s)."""

    sigma: float
    tau_c: float = np.inf

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.tau_c > 0:
            raise ValueError("tau_c must be positive")

    @property
    def diffusion(self) -> float:
        """Diffusion constant D = 2 sigma^2 / tau_c."""
        return 2 * self.sigma ** 2 / self.tau_c

    @classmethod
    def from_diffusion(cls, diffusion: float, tau_c: float) -> "OUParams":
        return cls(sigma=float(np.sqrt(diffusion * tau_c / 2)), tau_c=tau_c)


#: quiet channel
NO_NOISE = OUParams(0.0)


@dataclass(frozen=True)
class NoiseTrajectory:
    times: np.ndarray
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for stream ``key`` under master ``seed``.

    The stream depends only on ``(seed, key)``, never on how work is
    scheduled, so results are independent of thread count.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def ou_step(x, dt, p: OUParams, rng: np.random.Generator):
    """Exact OU update over ``dt``; ``x`` may be an array (one value per trajectory)."""
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be non-negative")
    x = np.asarray(x, dtype=float)
    n = rng.standard_normal(x.shape)
    if p.sigma == 0:
        return np.zeros_like(x)
    if np.isinf(p.tau_c):
        return x.copy()
    decay = np.exp(-np.asarray(dt) / p.tau_c)
    # -expm1 keeps the variance accurate for dt << tau_c
    var = p.sigma ** 2 * -np.expm1(-2 * np.asarray(dt) / p.tau_c)
    out = x * decay + n * np.sqrt(var)
    return out if out.ndim else float(out)


def _integral_var(u):
    """``2u - 3 + 4 exp(-u) - exp(-2u)`` without cancellation for small ``u``."""
    u = np.asarray(u, dtype=float)
    series = u ** 3 * (2 / 3 - u / 2 + 7 * u ** 2 / 30)
    direct = 2 * u + 4 * np.expm1(-u) - np.expm1(-2 * u)
    return np.where(u < 1e-3, series, direct)


def ou_step_integral(x, dt: float, p: OUParams, rng: np.random.Generator):
    """Exact joint update of the OU value and its integral over ``dt``.

    Returns ``(x_new, integral)``. Free precession under ``delta(t) S_z``
    only depends on the integral, so this is exact for waits of any length.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    x = np.asarray(x, dtype=float)
    z = rng.standard_normal((2,) + x.shape)
    if p.sigma == 0:
        return np.zeros_like(x), np.zeros_like(x)
    if np.isinf(p.tau_c):
        return x.copy(), x * dt
    tau = p.tau_c
    u = dt / tau
    a = np.exp(-u)
    v1 = p.sigma ** 2 * -np.expm1(-2 * u)
    v2 = p.sigma ** 2 * tau ** 2 * _integral_var(u)
    c = p.sigma ** 2 * tau * np.expm1(-u) ** 2
    s1 = np.sqrt(v1)
    if s1 == 0:
        return x.copy(), x * dt
    x_new = a * x + s1 * z[0]
    integral = -tau * np.expm1(-u) * x + (c / s1) * z[0] + np.sqrt(max(v2 - c * c / v1, 0.0)) * z[1]
    return x_new, integral


def sample_quasistatic(p: OUParams, rng: np.random.Generator, size=None):
    """Stationary draw N(0, sigma^2); used for initial values and frozen noise."""
    return p.sigma * rng.standard_normal(size)


def ou_trajectory(times, p: OUParams, seed: int, x0: float | None = None) -> NoiseTrajectory:
    """Sample one OU path on an increasing time grid."""
    times = np.asarray(times, dtype=float)
    rng = make_rng(seed, 0)
    vals = np.empty_like(times)
    x = sample_quasistatic(p, rng) if x0 is None else float(x0)
    vals[0] = x
    for k in range(1, len(times)):
        x = ou_step(x, times[k] - times[k - 1], p, rng)
        vals[k] = x
    return NoiseTrajectory(times, vals, seed)
