"""Error-state parameterizations and every matrix defined over them.

Three 15-dimensional error parameterizations share the block layout
``[attitude(3), velocity(3), position(3), gyro bias(3), accel bias(3)]``:

* additive: ``delta_x = estimate - truth`` per block, attitude via the
  Earth-frame small rotation between estimated and true DCM;
* left-invariant: body-frame errors of the SE2(3) element, eta = chi_hat^-1 chi;
* right-invariant: Earth-frame errors, eta = chi chi_hat^-1.

Bias errors are additive in all three; every 9x9 navigation-block matrix here
is extended to 15x15 with an identity bias block and no cross coupling.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import lie
from .ins import (
    EarthModel,
    ImuSample,
    NavState,
    gravitational_accel,
    group_from_nav,
    nav_from_group,
    vel_frame_convert,
)
from .lie import skew

I3 = np.eye(3)


class ErrorParam(enum.Enum):
    """Tag selecting the error-state definition of a filter."""

    ADDITIVE_EKF = "ekf"
    LEFT_INVARIANT = "left-invariant"
    RIGHT_INVARIANT = "right-invariant"


class InjectionMode(enum.Enum):
    FIRST_ORDER = "first-order"
    RETRACTION = "retraction"


@dataclass
class SystemMatrices:
    """Continuous-time linearized error dynamics: xi_dot = F xi + G w.

    Noise columns of G are ordered [gyro, accel, gyro-bias walk, accel-bias
    walk]; Qc is the matching 12x12 diagonal PSD of w.
    """

    F: np.ndarray
    G: np.ndarray
    Qc: np.ndarray


def process_noise(
    gyro_psd: float, accel_psd: float, gyro_bias_psd: float, accel_bias_psd: float
) -> np.ndarray:
    """Diagonal 12x12 continuous PSD from per-axis noise densities (SI units)."""
    return np.diag(
        [gyro_psd] * 3 + [accel_psd] * 3 + [gyro_bias_psd] * 3 + [accel_bias_psd] * 3
    )


def system_matrix(
    param: ErrorParam,
    x: NavState,
    u: ImuSample,
    earth: EarthModel,
    qc: np.ndarray | None = None,
) -> SystemMatrices:
    """F and G for the requested parameterization, evaluated at the estimate.

    The sample ``u`` must already be bias-corrected.  Gravity terms are frozen
    at the current position estimate; no gravity-gradient rows appear.
    """
    f = np.zeros((15, 15))
    g = np.zeros((15, 12))
    att = x.att
    omega_mat = earth.omega_mat

    if param is ErrorParam.ADDITIVE_EKF:
        f[0:3, 0:3] = -omega_mat
        f[0:3, 9:12] = att
        f[3:6, 0:3] = -skew(att @ u.accel)
        f[3:6, 3:6] = -2.0 * omega_mat
        f[3:6, 12:15] = att
        f[6:9, 3:6] = I3
        g[0:3, 0:3] = att
        g[3:6, 3:6] = att
    elif param is ErrorParam.LEFT_INVARIANT:
        omega_b = skew(u.gyro)
        f[0:3, 0:3] = -omega_b
        f[0:3, 9:12] = -I3
        f[3:6, 0:3] = -skew(u.accel)
        f[3:6, 3:6] = -omega_b
        f[3:6, 12:15] = -I3
        f[6:9, 3:6] = I3
        f[6:9, 6:9] = -omega_b
        g[0:3, 0:3] = -I3
        g[3:6, 3:6] = -I3
    elif param is ErrorParam.RIGHT_INVARIANT:
        nu = vel_frame_convert(x, earth)
        g_ib = gravitational_accel(x.pos, earth)
        f[0:3, 0:3] = -omega_mat
        f[0:3, 9:12] = -att
        f[3:6, 0:3] = skew(g_ib)
        f[3:6, 3:6] = -omega_mat
        f[3:6, 9:12] = -skew(nu) @ att
        f[3:6, 12:15] = -att
        f[6:9, 3:6] = I3
        f[6:9, 6:9] = -omega_mat
        f[6:9, 9:12] = -skew(x.pos) @ att
        g[0:3, 0:3] = -att
        g[3:6, 0:3] = -skew(nu) @ att
        g[3:6, 3:6] = -att
        g[6:9, 0:3] = -skew(x.pos) @ att
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(param)

    g[9:12, 6:9] = I3
    g[12:15, 9:12] = I3
    if qc is None:
        qc = np.zeros((12, 12))
    return SystemMatrices(f, g, qc)


def _extend(nav_block: np.ndarray) -> np.ndarray:
    out = np.eye(15)
    out[:9, :9] = nav_block
    return out


def relation_matrix(
    src: ErrorParam, dst: ErrorParam, x: NavState, earth: EarthModel
) -> np.ndarray:
    """Matrix A with xi_dst = A xi_src, evaluated at the state estimate.

    All six directed pairs are closed forms (each is the analytic inverse of
    its reverse), extended to 15x15 with an identity bias block.
    """
    if src is dst:
        return np.eye(15)
    att = x.att
    rt = att.T
    omega_mat = earth.omega_mat

    if src is ErrorParam.ADDITIVE_EKF and dst is ErrorParam.LEFT_INVARIANT:
        block = np.zeros((9, 9))
        block[0:3, 0:3] = -rt
        block[3:6, 3:6] = -rt
        block[3:6, 6:9] = -(rt @ omega_mat)
        block[6:9, 6:9] = -rt
        return _extend(block)
    if src is ErrorParam.LEFT_INVARIANT and dst is ErrorParam.ADDITIVE_EKF:
        block = np.zeros((9, 9))
        block[0:3, 0:3] = -att
        block[3:6, 3:6] = -att
        block[3:6, 6:9] = omega_mat @ att
        block[6:9, 6:9] = -att
        return _extend(block)

    nu = vel_frame_convert(x, earth)
    nu_x = skew(nu)
    pos_x = skew(x.pos)

    if src is ErrorParam.ADDITIVE_EKF and dst is ErrorParam.RIGHT_INVARIANT:
        block = np.zeros((9, 9))
        block[0:3, 0:3] = -I3
        block[3:6, 0:3] = -nu_x
        block[3:6, 3:6] = -I3
        block[3:6, 6:9] = -omega_mat
        block[6:9, 0:3] = -pos_x
        block[6:9, 6:9] = -I3
        return _extend(block)
    if src is ErrorParam.RIGHT_INVARIANT and dst is ErrorParam.ADDITIVE_EKF:
        block = np.zeros((9, 9))
        block[0:3, 0:3] = -I3
        block[3:6, 0:3] = nu_x - omega_mat @ pos_x
        block[3:6, 3:6] = -I3
        block[3:6, 6:9] = omega_mat
        block[6:9, 0:3] = pos_x
        block[6:9, 6:9] = -I3
        return _extend(block)

    chi = lie.GroupState(att, nu, x.pos)
    if src is ErrorParam.LEFT_INVARIANT and dst is ErrorParam.RIGHT_INVARIANT:
        return _extend(lie.adjoint(chi))
    return _extend(lie.adjoint_inv(chi))


def transformation_matrix_generic(
    original: ErrorParam,
    target: ErrorParam,
    x_plus: NavState,
    x_minus: NavState,
    earth: EarthModel,
) -> np.ndarray:
    """A^-1(x_plus) A(x_minus) with A mapping the original error to the target
    error; composed numerically (the closed forms below must agree with this)."""
    a_plus = relation_matrix(original, target, x_plus, earth)
    a_minus = relation_matrix(original, target, x_minus, earth)
    return np.linalg.solve(a_plus, a_minus)


def transformation_matrix(
    original: ErrorParam,
    target: ErrorParam,
    x_plus: NavState,
    x_minus: NavState,
    earth: EarthModel,
) -> np.ndarray:
    """Closed-form post-update covariance transformation.

    Applied as P <- T P T^T to the covariance of a filter running in the
    ``original`` parameterization right after its update; x_plus / x_minus are
    the updated and predicted states of that update.  Determinant is one.
    """
    if original is target:
        return np.eye(15)
    omega_mat = earth.omega_mat
    att_p, att_m = x_plus.att, x_minus.att
    block = np.zeros((9, 9))

    if original is ErrorParam.ADDITIVE_EKF and target is ErrorParam.LEFT_INVARIANT:
        d = att_p @ att_m.T
        block[0:3, 0:3] = d
        block[3:6, 3:6] = d
        block[3:6, 6:9] = d @ omega_mat - omega_mat @ d
        block[6:9, 6:9] = d
        return _extend(block)
    if original is ErrorParam.LEFT_INVARIANT and target is ErrorParam.ADDITIVE_EKF:
        e = att_p.T @ att_m
        block[0:3, 0:3] = e
        block[3:6, 3:6] = e
        block[6:9, 6:9] = e
        return _extend(block)

    nu_p = vel_frame_convert(x_plus, earth)
    nu_m = vel_frame_convert(x_minus, earth)
    if original is ErrorParam.ADDITIVE_EKF and target is ErrorParam.RIGHT_INVARIANT:
        block[0:3, 0:3] = I3
        block[3:6, 3:6] = I3
        block[6:9, 6:9] = I3
        block[3:6, 0:3] = (
            -skew(nu_p) + omega_mat @ skew(x_plus.pos) + skew(nu_m) - omega_mat @ skew(x_minus.pos)
        )
        block[6:9, 0:3] = -skew(x_plus.pos) + skew(x_minus.pos)
        return _extend(block)
    if original is ErrorParam.RIGHT_INVARIANT and target is ErrorParam.ADDITIVE_EKF:
        block[0:3, 0:3] = I3
        block[3:6, 3:6] = I3
        block[6:9, 6:9] = I3
        block[3:6, 0:3] = skew(nu_p) - skew(nu_m)
        block[6:9, 0:3] = skew(x_plus.pos) - skew(x_minus.pos)
        return _extend(block)

    if original is ErrorParam.LEFT_INVARIANT and target is ErrorParam.RIGHT_INVARIANT:
        e = att_p.T @ att_m
        block[0:3, 0:3] = e
        block[3:6, 3:6] = e
        block[6:9, 6:9] = e
        block[3:6, 0:3] = att_p.T @ (skew(nu_m) - skew(nu_p)) @ att_m
        block[6:9, 0:3] = att_p.T @ (skew(x_minus.pos) - skew(x_plus.pos)) @ att_m
        return _extend(block)
    # right-invariant -> left-invariant
    d = att_p @ att_m.T
    block[0:3, 0:3] = d
    block[3:6, 3:6] = d
    block[6:9, 6:9] = d
    block[3:6, 0:3] = skew(nu_p) @ d - d @ skew(nu_m)
    block[6:9, 0:3] = skew(x_plus.pos) @ d - d @ skew(x_minus.pos)
    return _extend(block)


def inject_error(
    param: ErrorParam,
    x_minus: NavState,
    xi_plus: np.ndarray,
    earth: EarthModel,
    mode: InjectionMode = InjectionMode.RETRACTION,
) -> NavState:
    """Absorb an estimated error state into the predicted navigation state.

    In first-order mode the three parameterizations of equivalent errors
    produce identical states up to rounding; retraction uses the group
    exponential instead of the linearized factor.
    """
    xi_plus = np.asarray(xi_plus, dtype=float)
    phi = xi_plus[0:3]
    if np.linalg.norm(phi) >= np.pi:
        raise ValueError("attitude error at or beyond pi cannot be injected")
    bg = x_minus.bg - xi_plus[9:12]
    ba = x_minus.ba - xi_plus[12:15]

    if param is ErrorParam.ADDITIVE_EKF:
        if mode is InjectionMode.RETRACTION:
            att = lie.so3_exp(-phi) @ x_minus.att
        else:
            att = lie.orthonormalize((I3 - skew(phi)) @ x_minus.att)
        vel = x_minus.vel - xi_plus[3:6]
        pos = x_minus.pos - xi_plus[6:9]
        return NavState(att, vel, pos, bg, ba, x_minus.time)

    chi_hat = group_from_nav(x_minus, earth)
    if mode is InjectionMode.RETRACTION:
        delta = lie.se23_exp(xi_plus[:9])
        if param is ErrorParam.LEFT_INVARIANT:
            chi = lie.compose(chi_hat, delta)
        else:
            chi = lie.compose(delta, chi_hat)
        chi.rot = lie.orthonormalize(chi.rot)
    else:
        dnu, drho = xi_plus[3:6], xi_plus[6:9]
        if param is ErrorParam.LEFT_INVARIANT:
            rot = chi_hat.rot @ (I3 + skew(phi))
            nu = chi_hat.nu + chi_hat.rot @ dnu
            rho = chi_hat.rho + chi_hat.rot @ drho
        else:
            rot = (I3 + skew(phi)) @ chi_hat.rot
            nu = chi_hat.nu + np.cross(phi, chi_hat.nu) + dnu
            rho = chi_hat.rho + np.cross(phi, chi_hat.rho) + drho
        chi = lie.GroupState(lie.orthonormalize(rot), nu, rho)
    return nav_from_group(chi, earth, bg, ba, x_minus.time)
