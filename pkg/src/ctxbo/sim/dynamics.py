"""Double-integrator longitudinal dynamics.

Positions are signed distances to the conflict point; negative means
upstream (approaching), positive means past it.  The discrete update is
exact for a zero-order-hold acceleration:

    p' = p + dt v + dt^2 a / 2
    v' = v + dt a
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class VehicleState:
    p: float  # signed longitudinal position to the conflict point [m]
    v: float  # speed [m/s]

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.v)):
            raise ValueError("vehicle state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v])


def step_dynamics(state: VehicleState, a: float, dt: float) -> VehicleState:
    """One exact zero-order-hold integration step."""
    return VehicleState(p=state.p + dt * state.v + 0.5 * dt * dt * a,
                        v=state.v + dt * a)


@lru_cache(maxsize=16)
def control_to_state_maps(horizon: int, dt: float):
    """Affine maps from an acceleration sequence to predicted states.

    Returns (Mv, Mp, steps) such that for u in R^H,

        v_{k+1} = v0 + (Mv u)_k
        p_{k+1} = p0 + steps_k * dt * v0 + (Mp u)_k,   k = 0..H-1

    with Mv[k, j] = dt for j <= k and Mp[k, j] = dt^2 (k - j + 1/2) for
    j <= k, both zero above the diagonal.
    """
    k = np.arange(horizon)
    lower = k[:, None] >= k[None, :]
    Mv = dt * lower.astype(float)
    Mp = (dt * dt) * np.where(lower, k[:, None] - k[None, :] + 0.5, 0.0)
    steps = (k + 1).astype(float)
    return Mv, Mp, steps


def rollout(state: VehicleState, u: np.ndarray, dt: float):
    """Predicted positions and speeds (length H) after applying u."""
    u = np.asarray(u, dtype=float)
    Mv, Mp, steps = control_to_state_maps(u.size, dt)
    v = state.v + Mv @ u
    p = state.p + steps * dt * state.v + Mp @ u
    return p, v
