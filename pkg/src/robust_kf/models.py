"""State-space models and the two-state benchmark system.

Transition and measurement maps take arrays of shape ``(..., n)`` and must
broadcast over leading axes; the filters evaluate all cubature points (and
all Monte Carlo runs) in a single call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import cholesky_lower

Map = Callable[[np.ndarray], np.ndarray]


class NonPositiveDiagonal(ValueError):
    pass


class DegenerateCovariance(ValueError):
    pass


@dataclass(frozen=True)
class StateSpaceModel:
    """``x_t = f(x_{t-1}) + v_t``, ``y_t = h(x_t) + w_t`` with
    ``v_t ~ N(0, q)`` and nominal ``w_t ~ N(0, r)``."""

    n: int
    m: int
    f: Map
    h: Map
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        r = np.array(self.r, dtype=float)
        if q.shape != (self.n, self.n):
            raise ValueError(f"q must be {self.n}x{self.n}, got {q.shape}")
        if r.shape != (self.m, self.m):
            raise ValueError(f"r must be {self.m}x{self.m}, got {r.shape}")
        cholesky_lower(q)
        cholesky_lower(r)
        q.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class CorrelationDecomposition:
    sigma: np.ndarray
    kappa: np.ndarray

    def covariance(self):
        return self.sigma[:, None] * self.kappa * self.sigma[None, :]


def decompose_correlation(r) -> CorrelationDecomposition:
    """Split a covariance into per-channel std devs and correlation coefficients."""
    r = np.asarray(r, dtype=float)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    if np.any(d <= 0):
        raise NonPositiveDiagonal(f"covariance diagonal must be positive, got {d}")
    sigma = np.sqrt(d)
    kappa = r / (sigma[..., :, None] * sigma[..., None, :])
    idx = np.arange(r.shape[-1])
    kappa[..., idx, idx] = 1.0
    return CorrelationDecomposition(sigma=sigma, kappa=kappa)


def benchmark_transition(x):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 * np.sin(x1) + np.sin(x2), x2 * np.cos(x2) + 0.75 * x1], axis=-1)


def benchmark_measurement(x):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 + x1 * x2, x1 * np.cos(2.0 * x2) + np.sin(x1)], axis=-1)


BENCHMARK_Q = np.diag([0.2, 0.2])
BENCHMARK_SIGMA2 = 0.01


def benchmark_r(kappa12: float) -> np.ndarray:
    c = BENCHMARK_SIGMA2 * kappa12
    return np.array([[BENCHMARK_SIGMA2, c], [c, BENCHMARK_SIGMA2]])


def build_benchmark_model(kappa12: float) -> StateSpaceModel:
    """Two-state nonlinear benchmark with measurement correlation ``kappa12``."""
    if not -1.0 <= kappa12 <= 1.0:
        raise ValueError(f"kappa12 must lie in [-1, 1], got {kappa12}")
    if abs(kappa12) == 1.0:
        raise DegenerateCovariance("|kappa12| = 1 makes the measurement covariance singular")
    return StateSpaceModel(
        n=2,
        m=2,
        f=benchmark_transition,
        h=benchmark_measurement,
        q=BENCHMARK_Q.copy(),
        r=benchmark_r(kappa12),
    )
