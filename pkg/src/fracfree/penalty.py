"""Penalty functions for the obstacle and the exterior volume.

* ``g_sigma``: obstacle penalty, linear with slope ``-1/sigma`` below ``-sigma``,
  the quadratic bridge ``t^2 / (2 sigma^2)`` on ``[-sigma, 0]`` and zero above;
  the result is C^1, convex and non-increasing.
* ``h_delta``: ramp from 0 to 1 on ``[0, delta]``.
* ``f_eps``: slope ``1/eps`` above ``gamma`` and ``eps`` below.

All functions accept scalars or arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PenaltyParams:
    sigma: float
    delta: float
    epsilon: float
    gamma: float

    def __post_init__(self):
        for name in ("sigma", "delta", "epsilon"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")

    def replace(self, **kw) -> "PenaltyParams":
        d = dict(sigma=self.sigma, delta=self.delta, epsilon=self.epsilon, gamma=self.gamma)
        d.update(kw)
        return PenaltyParams(**d)


def g_sigma(t, sigma):
    t = np.asarray(t, dtype=float)
    out = np.where(t <= -sigma, -(t + 0.5 * sigma) / sigma, 0.5 * t * t / sigma**2)
    return np.where(t >= 0.0, 0.0, out)[()]


def g_sigma_prime(t, sigma):
    t = np.asarray(t, dtype=float)
    out = np.where(t <= -sigma, -1.0 / sigma, t / sigma**2)
    return np.where(t >= 0.0, 0.0, out)[()]


def g_sigma_second(t, sigma):
    """Curvature of ``g_sigma``: ``1/sigma^2`` on the bridge, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    return np.where((t > -sigma) & (t < 0.0), 1.0 / sigma**2, 0.0)[()]


def h_delta(t, delta):
    t = np.asarray(t, dtype=float)
    return np.clip(t / delta, 0.0, 1.0)[()]


def h_delta_prime(t, delta):
    # zero at both kinks
    t = np.asarray(t, dtype=float)
    return np.where((t > 0.0) & (t < delta), 1.0 / delta, 0.0)[()]


def f_eps(t, epsilon, gamma):
    t = np.asarray(t, dtype=float)
    return np.where(t >= gamma, (t - gamma) / epsilon, epsilon * (t - gamma))[()]


def f_eps_prime(t, epsilon, gamma):
    # the lower slope at t == gamma
    t = np.asarray(t, dtype=float)
    return np.where(t > gamma, 1.0 / epsilon, epsilon)[()]
