"""Log barrier functions, their linear smoothed extension, and the gap bound.

Everything here is a pure scalar (or numpy-broadcast) function; safe to call
from anywhere.  ``mu`` is the barrier sharpness factor: larger values track
the infeasibility indicator more closely and cap the penalty slope at ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BarrierConfig",
    "log_barrier",
    "smoothed_log_barrier",
    "smoothed_log_barrier_grad",
    "shifted_barrier",
    "shifted_barrier_grad",
    "performance_bound",
]


@dataclass(frozen=True)
class BarrierConfig:
    """Barrier sharpness ``mu`` and the cost limit ``cost_limit``.

    ``mu`` must exceed 1 for the shifted (dead-zone) barrier; the plain and
    smoothed barriers only need ``mu > 0``.
    """

    mu: float = 3.0
    cost_limit: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.cost_limit):
            raise ValueError("cost_limit must be finite")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


def log_barrier(x: float, mu: float) -> float:
    """Classic log barrier -(1/mu)*ln(-x); only defined for x < 0."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if x >= 0:
        raise ValueError(f"log_barrier requires x < 0, got {x}")
    return -math.log(-x) / mu


def smoothed_log_barrier(x, mu: float):
    """Linear smoothed log barrier: log branch for x <= -1/mu^2, linear after.

    Continuous and differentiable on all reals, with slope capped at ``mu``.
    Accepts scalars or numpy arrays.
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    knot = -1.0 / (mu * mu)
    offset = -math.log(1.0 / (mu * mu)) / mu + 1.0 / mu
    x_arr = np.asarray(x, dtype=np.float64)
    left = x_arr <= knot
    # clip keeps the log argument valid on the branch not selected
    out = np.where(
        left,
        -np.log(np.where(left, -x_arr, 1.0)) / mu,
        mu * x_arr + offset,
    )
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def smoothed_log_barrier_grad(x, mu: float):
    """Derivative of :func:`smoothed_log_barrier`: -1/(mu*x) then mu."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    knot = -1.0 / (mu * mu)
    x_arr = np.asarray(x, dtype=np.float64)
    left = x_arr <= knot
    out = np.where(left, -1.0 / (mu * np.where(left, x_arr, -1.0)), mu)
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def _shifted(x, mu: float, cost_limit: float):
    """Dead-zone barrier without the mu > 1 guard (bench needs mu = 1)."""
    x_arr = np.asarray(x, dtype=np.float64)
    arg = np.maximum(x_arr - cost_limit, 0.0) - 1.0
    return smoothed_log_barrier(arg, mu)


def _shifted_grad(x, mu: float, cost_limit: float):
    z = np.asarray(x, dtype=np.float64) - cost_limit
    mid_hi = 1.0 - 1.0 / (mu * mu)
    mid = (z > 0) & (z <= mid_hi)
    out = np.where(
        z <= 0,
        0.0,
        np.where(mid, 1.0 / (mu * np.where(mid, 1.0 - z, 1.0)), mu),
    )
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out)
    return out


def shifted_barrier(x, cfg: BarrierConfig):
    """Barrier with a dead zone: exactly 0 (value and slope) while x <= cost_limit.

    A rectifier plus unit shift is applied to the input, so the smoothed
    barrier's knot value 0 is reached exactly at the constraint boundary.
    """
    if cfg.mu <= 1:
        raise ValueError(f"shifted barrier requires mu > 1, got {cfg.mu}")
    return _shifted(x, cfg.mu, cfg.cost_limit)


def shifted_barrier_grad(x, cfg: BarrierConfig):
    """Derivative of :func:`shifted_barrier`; 0 in the dead zone (incl. the corner)."""
    if cfg.mu <= 1:
        raise ValueError(f"shifted barrier requires mu > 1, got {cfg.mu}")
    return _shifted_grad(x, cfg.mu, cfg.cost_limit)


def performance_bound(mu: float, m: int) -> float:
    """Worst-case objective gap of the barrier-penalized optimum: |1-mu^2|*m/mu."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    return abs(1.0 - mu * mu) * m / mu
