"""Observation models: GNSS velocity in the Earth frame and body-frame wheel
odometry, with innovations and observation matrices for each error-state
parameterization.

The observation matrices satisfy the exact consistency relation
``H_b = H_a A`` between parameterizations; they are written in closed form but
validated against that relation and against finite-difference linearization
of the innovation.  The noise covariance depends only on the sensor, never on
the parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errorstate import ErrorParam
from .ins import EarthModel, NavState, vel_frame_convert
from .lie import skew

I3 = np.eye(3)


@dataclass
class GnssVelObs:
    """GNSS velocity in the Earth frame with per-axis standard deviations."""

    time: float
    vel: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.full(3, 0.2))

    kind = "gnss_vel"

    def __post_init__(self):
        self.vel = np.asarray(self.vel, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if np.any(self.sigma <= 0.0):
            raise ValueError("observation sigma must be positive")


@dataclass
class OdoObs:
    """Body-frame velocity from non-steering wheels; lateral and vertical
    channels are zero pseudo-observations sharing the same sigma."""

    time: float
    vel_body: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.full(3, 0.1))

    kind = "odo"

    def __post_init__(self):
        self.vel_body = np.asarray(self.vel_body, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if np.any(self.sigma <= 0.0):
            raise ValueError("observation sigma must be positive")


Observation = Union[GnssVelObs, OdoObs]


def innovation(
    x: NavState, obs: Observation, earth: EarthModel, time_tol: float = np.inf
) -> np.ndarray:
    """Predicted-minus-measured observation at the current estimate."""
    if abs(obs.time - x.time) > time_tol:
        raise ValueError(
            f"observation at t={obs.time} does not match filter time t={x.time}"
        )
    if obs.kind == "gnss_vel":
        return x.vel - obs.vel
    if obs.kind == "odo":
        return x.att.T @ x.vel - obs.vel_body
    raise ValueError(f"unsupported observation kind {obs.kind!r}")


def observation_matrix(
    param: ErrorParam, x: NavState, kind: str, earth: EarthModel
) -> np.ndarray:
    """3x15 observation matrix for the given parameterization and sensor."""
    h = np.zeros((3, 15))
    att = x.att
    rt = att.T
    omega_mat = earth.omega_mat

    if kind == "gnss_vel":
        if param is ErrorParam.ADDITIVE_EKF:
            h[:, 3:6] = I3
        elif param is ErrorParam.LEFT_INVARIANT:
            h[:, 3:6] = -att
            h[:, 6:9] = omega_mat @ att
        else:
            nu = vel_frame_convert(x, earth)
            h[:, 0:3] = skew(nu) - omega_mat @ skew(x.pos)
            h[:, 3:6] = -I3
            h[:, 6:9] = omega_mat
        return h

    if kind == "odo":
        if param is ErrorParam.ADDITIVE_EKF:
            h[:, 0:3] = rt @ skew(x.vel)
            h[:, 3:6] = rt
        elif param is ErrorParam.LEFT_INVARIANT:
            h[:, 0:3] = -skew(rt @ x.vel)
            h[:, 3:6] = -I3
            h[:, 6:9] = rt @ omega_mat @ att
        else:
            h[:, 0:3] = -(rt @ skew(x.pos) @ omega_mat)
            h[:, 3:6] = -rt
            h[:, 6:9] = rt @ omega_mat
        return h

    raise ValueError(f"unsupported observation kind {kind!r}")


def noise_covariance(obs: Observation) -> np.ndarray:
    """Diagonal observation noise covariance; parameterization-independent."""
    return np.diag(obs.sigma**2)
