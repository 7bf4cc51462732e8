"""Robust M-estimation costs and their weight functions.

``rho`` is the cost applied to a normalized residual and ``psi`` is the
weight ``rho'(e) / e`` used to inflate measurement variances. Only Huber's
cost ships; new kinds register a ``(rho, psi)`` pair in ``COSTS``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HUBER_GAMMA = 1.345


def huber_rho(e, gamma):
    a = np.abs(e)
    return np.where(a < gamma, 0.5 * a * a, gamma * a - 0.5 * gamma * gamma)


def huber_psi(e, gamma):
    a = np.abs(e)
    # the boundary |e| == gamma takes the linear branch; both give 1 there
    with np.errstate(divide="ignore"):
        return np.where(a < gamma, 1.0, gamma / np.where(a < gamma, 1.0, a))


COSTS = {
    "huber": (huber_rho, huber_psi),
}


@dataclass(frozen=True)
class RobustCost:
    """A robust cost ``kind`` with tuning parameter ``gamma``."""

    kind: str = "huber"
    gamma: float = HUBER_GAMMA

    def __post_init__(self):
        if self.kind not in COSTS:
            raise ValueError(f"unknown robust cost {self.kind!r}; known: {sorted(COSTS)}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def rho(self, e):
        return COSTS[self.kind][0](np.asarray(e, dtype=float), self.gamma)

    def psi(self, e):
        return COSTS[self.kind][1](np.asarray(e, dtype=float), self.gamma)


def rho(cost: RobustCost, e):
    """Cost value for residual(s) ``e``."""
    return cost.rho(e)


def psi(cost: RobustCost, e):
    """Weight value for residual(s) ``e``; lies in (0, 1] for Huber."""
    return cost.psi(e)
