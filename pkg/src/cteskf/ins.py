"""ECEF strapdown INS: state types, kinematic models and discrete propagation.

Two equivalent formulations of the inertial kinematics are provided: the
classical one in terms of the Earth-relative velocity, and the group-affine
one on SE2(3) in terms of the inertial velocity resolved in the Earth frame.
Both share the same attitude equation; the velocities differ by the frame
transport term ``omega_ie x r``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .lie import GroupState, skew

WGS84_RATE = 7.292115e-5  # rad/s
EARTH_GM = 3.986004418e14  # m^3/s^2
EARTH_RADIUS = 6378137.0  # m
G0 = 9.80665  # m/s^2, standard gravity for IMU-spec unit conversions

# Somigliana coefficients (normal gravity on the reference ellipsoid)
_GAMMA_EQUATOR = 9.7803253359
_SOMIGLIANA_K = 1.931852652458e-3
_ECC_SQ = 6.69437999014e-3


@dataclass
class EarthModel:
    """Earth rotation and gravity field configuration.

    gravity_mode selects how the local gravity vector g(r) is evaluated:
    ``constant`` uses ``gravity_const`` verbatim, ``spherical`` uses a
    GM/r^2 central field minus the centrifugal term, ``normal`` uses the
    Somigliana magnitude at geocentric latitude directed along -r.
    """

    omega_ie: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, WGS84_RATE]))
    gravity_mode: str = "spherical"
    gravity_const: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -G0]))
    surface_guard: bool = False

    def __post_init__(self):
        self.omega_ie = np.asarray(self.omega_ie, dtype=float)
        self.gravity_const = np.asarray(self.gravity_const, dtype=float)
        if np.linalg.norm(self.omega_ie) >= 1e-3:
            raise ValueError("earth rotation rate above 1e-3 rad/s is not plausible")
        if self.gravity_mode not in ("constant", "spherical", "normal"):
            raise ValueError(f"unknown gravity mode {self.gravity_mode!r}")
        self.omega_mat = skew(self.omega_ie)
        self.omega_sq = self.omega_mat @ self.omega_mat

    def gravity(self, r: np.ndarray) -> np.ndarray:
        """Local gravity vector g(r): mass attraction plus centrifugal effect."""
        if self.gravity_mode == "constant":
            return self.gravity_const
        dist_sq = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
        if dist_sq == 0.0:
            raise ValueError(f"{self.gravity_mode} gravity is undefined at the origin")
        if self.gravity_mode == "spherical":
            return -EARTH_GM / (dist_sq * np.sqrt(dist_sq)) * r - self.omega_sq @ r
        sin_lat_sq = r[2] * r[2] / dist_sq
        gamma = (
            _GAMMA_EQUATOR
            * (1.0 + _SOMIGLIANA_K * sin_lat_sq)
            / np.sqrt(1.0 - _ECC_SQ * sin_lat_sq)
        )
        return -gamma / np.sqrt(dist_sq) * r

    def gravity_batch(self, r: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`gravity` for an (N, 3) array of positions."""
        r = np.asarray(r, dtype=float)
        if self.gravity_mode == "constant":
            return np.broadcast_to(self.gravity_const, r.shape).copy()
        dist_sq = np.einsum("ni,ni->n", r, r)
        if np.any(dist_sq == 0.0):
            raise ValueError(f"{self.gravity_mode} gravity is undefined at the origin")
        if self.gravity_mode == "spherical":
            return -EARTH_GM / (dist_sq * np.sqrt(dist_sq))[:, None] * r - r @ self.omega_sq.T
        sin_lat_sq = r[:, 2] ** 2 / dist_sq
        gamma = (
            _GAMMA_EQUATOR
            * (1.0 + _SOMIGLIANA_K * sin_lat_sq)
            / np.sqrt(1.0 - _ECC_SQ * sin_lat_sq)
        )
        return -(gamma / np.sqrt(dist_sq))[:, None] * r


def gravitational_accel(r: np.ndarray, earth: EarthModel) -> np.ndarray:
    """Gravitational (mass-attraction) acceleration: g(r) + (omega_ie x)^2 r."""
    return earth.gravity(r) + earth.omega_sq @ np.asarray(r, dtype=float)


@dataclass
class NavState:
    """Full navigation state: attitude DCM (body to ECEF), ECEF velocity and
    position, gyro and accelerometer biases, and a timestamp."""

    att: np.ndarray
    vel: np.ndarray
    pos: np.ndarray
    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def copy(self) -> "NavState":
        return NavState(
            self.att.copy(), self.vel.copy(), self.pos.copy(), self.bg.copy(), self.ba.copy(), self.time
        )

    def validate(self, earth: EarthModel | None = None, tol: float = 1e-9) -> None:
        if np.linalg.norm(self.att.T @ self.att - np.eye(3)) > tol:
            raise ValueError("attitude matrix is not orthonormal")
        if earth is not None and earth.surface_guard:
            dist = np.linalg.norm(self.pos)
            if not (6.2e6 <= dist <= 1.2e7):
                raise ValueError(f"position norm {dist:.3e} m outside Earth-surface window")


@dataclass
class ImuSample:
    """Measured angular rate and specific force in the body frame."""

    time: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass
class StateDerivative:
    """Time derivative of a NavState under the classical kinematics.

    The attitude rate is reported both as the matrix derivative and as the
    body-frame rate relative to the Earth frame (datt = att @ skew(rate)).
    """

    datt: np.ndarray
    att_rate_body: np.ndarray
    dvel: np.ndarray
    dpos: np.ndarray
    dbg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dba: np.ndarray = field(default_factory=lambda: np.zeros(3))


def correct_imu(x: NavState, u: ImuSample) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the state's bias estimates from a raw IMU sample."""
    return u.gyro - x.bg, u.accel - x.ba


def classic_derivative(
    x: NavState, u: ImuSample, earth: EarthModel, subtract_biases: bool = True
) -> StateDerivative:
    """Classical ECEF kinematics: transport and Coriolis on the Earth-relative
    velocity, gravity included; bias means are constant."""
    if subtract_biases:
        omega_b, f_b = correct_imu(x, u)
    else:
        omega_b, f_b = u.gyro, u.accel
    datt = x.att @ skew(omega_b) - earth.omega_mat @ x.att
    dvel = x.att @ f_b - 2.0 * (earth.omega_mat @ x.vel) + earth.gravity(x.pos)
    rate_body = omega_b - x.att.T @ earth.omega_ie
    return StateDerivative(datt, rate_body, dvel, x.vel.copy())


def left_rate_matrix(omega_b: np.ndarray, f_b: np.ndarray) -> np.ndarray:
    """Input-side generator of the group-affine model (multiplies on the right)."""
    w = np.zeros((5, 5))
    w[:3, :3] = skew(omega_b)
    w[:3, 3] = f_b
    w[3, 4] = 1.0
    return w


def right_rate_matrix(g_accel: np.ndarray, omega_ie: np.ndarray) -> np.ndarray:
    """Frame-side generator of the group-affine model (multiplies on the left).

    g_accel is the gravitational acceleration frozen at the current position
    estimate; its variation with motion is neglected.
    """
    u = np.zeros((5, 5))
    u[:3, :3] = -skew(omega_ie)
    u[:3, 3] = g_accel
    u[3, 4] = -1.0
    return u


def group_affine_derivative(
    chi: GroupState, omega_b: np.ndarray, f_b: np.ndarray, g_accel: np.ndarray, earth: EarthModel
) -> np.ndarray:
    """Time derivative of the SE2(3) state, chi W + U chi, as a 5x5 matrix."""
    w = left_rate_matrix(omega_b, f_b)
    u = right_rate_matrix(g_accel, earth.omega_ie)
    return chi.as_matrix() @ w + u @ chi.as_matrix()


def vel_frame_convert(x: NavState, earth: EarthModel) -> np.ndarray:
    """Inertial velocity resolved in the Earth frame: v + omega_ie x r."""
    return x.vel + np.cross(earth.omega_ie, x.pos)


def group_vel_to_classic(nu: np.ndarray, r: np.ndarray, earth: EarthModel) -> np.ndarray:
    """Inverse of :func:`vel_frame_convert`."""
    return nu - np.cross(earth.omega_ie, r)


def group_from_nav(x: NavState, earth: EarthModel) -> GroupState:
    """View the navigation state as an SE2(3) element (biases dropped)."""
    return GroupState(x.att.copy(), vel_frame_convert(x, earth), x.pos.copy())


def nav_from_group(
    chi: GroupState, earth: EarthModel, bg: np.ndarray, ba: np.ndarray, time: float
) -> NavState:
    """Rebuild a NavState from an SE2(3) element plus bias and time carry-overs."""
    vel = group_vel_to_classic(chi.nu, chi.rho, earth)
    return NavState(chi.rot.copy(), vel, chi.rho.copy(), bg.copy(), ba.copy(), time)


def propagate_state(
    x: NavState,
    u: ImuSample,
    dt: float,
    earth: EarthModel,
    max_dt: float = 0.5,
    subtract_biases: bool = True,
) -> NavState:
    """Single-step strapdown update.

    Attitude advances by the body rotation increment composed with the Earth
    rotation over the step; velocity and position use a midpoint rule.  The
    sample is treated as the constant rate over the step.
    """
    if dt <= 0.0:
        raise ValueError("propagation step must be positive")
    if dt > max_dt:
        raise ValueError(f"propagation step {dt} s exceeds the {max_dt} s cap")
    if subtract_biases:
        omega_b, f_b = correct_imu(x, u)
    else:
        omega_b, f_b = u.gyro, u.accel

    earth_half = lie.so3_exp(earth.omega_ie * (-0.5 * dt))
    body_half = lie.so3_exp(omega_b * (0.5 * dt))
    att_mid = earth_half @ x.att @ body_half
    att_new = lie.renormalize(earth_half @ att_mid @ body_half)

    f_e = att_mid @ f_b
    acc0 = f_e - 2.0 * (earth.omega_mat @ x.vel) + earth.gravity(x.pos)
    vel_mid = x.vel + 0.5 * dt * acc0
    pos_mid = x.pos + 0.5 * dt * x.vel
    acc_mid = f_e - 2.0 * (earth.omega_mat @ vel_mid) + earth.gravity(pos_mid)
    vel_new = x.vel + dt * acc_mid
    pos_new = x.pos + 0.5 * dt * (x.vel + vel_new)

    out = NavState(att_new, vel_new, pos_new, x.bg.copy(), x.ba.copy(), x.time + dt)
    if earth.surface_guard:
        out.validate(earth)
    return out
