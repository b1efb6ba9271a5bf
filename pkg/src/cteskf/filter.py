"""Continuous-discrete error-state Kalman filter engine.

A :class:`FilterState` is a self-contained value (state, covariance and
configuration); every operation returns a new one.  Three update strategies
are provided:

* plain: gain, covariance and injection all in the filter's own
  parameterization;
* switch: covariance is switched into a target parameterization before the
  update and switched back at the updated state afterwards;
* transform: plain update followed by a single covariance transformation
  built from the predicted and updated states.

For non-iterated updates the switch and transform strategies produce the same
trajectories; the transform never changes the updated state relative to the
plain update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    _HAVE_NUMBA = False

from . import lie
from .errorstate import (
    ErrorParam,
    InjectionMode,
    inject_error,
    relation_matrix,
    system_matrix,
    transformation_matrix,
)
from .ins import EarthModel, ImuSample, NavState, correct_imu, propagate_state
from .sensors import Observation, innovation, noise_covariance, observation_matrix

I15 = np.eye(15)


class FilterDivergence(RuntimeError):
    """Raised when the covariance or state stops being finite or solvable."""


@dataclass
class Strategy:
    """Update strategy: ``plain``, or ``switch``/``transform`` with a map from
    observation kind to the target parameterization."""

    kind: str = "plain"
    targets: dict = field(default_factory=dict)

    def target_for(self, obs_kind: str, own: ErrorParam) -> ErrorParam:
        return self.targets.get(obs_kind, own)


def mixed_sensor_strategy(kind: str = "transform") -> Strategy:
    """Default CT/switch target map: Earth-frame velocity observations to the
    left-invariant representation, body-frame odometry to the right-invariant."""
    return Strategy(
        kind,
        {"gnss_vel": ErrorParam.LEFT_INVARIANT, "odo": ErrorParam.RIGHT_INVARIANT},
    )


@dataclass
class UpdateReport:
    """Diagnostics captured on every observation update."""

    innovation: np.ndarray
    gain_norm: float
    trace_pre: float
    trace_post: float
    target: ErrorParam | None = None
    transform: np.ndarray | None = None
    switch_forward: np.ndarray | None = None
    switch_backward: np.ndarray | None = None


@dataclass
class FilterState:
    """Filter value: navigation state, covariance and configuration."""

    x: NavState
    P: np.ndarray
    param: ErrorParam
    strategy: Strategy = field(default_factory=Strategy)
    injection: InjectionMode = InjectionMode.RETRACTION
    qc: np.ndarray = field(default_factory=lambda: np.zeros((12, 12)))
    earth: EarthModel = field(default_factory=EarthModel)
    joseph: bool = False
    time_tol: float = np.inf


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def assert_spd(p: np.ndarray, tol_factor: float = 1e-10) -> None:
    """Covariance sanity used by tests: symmetric and PSD within tolerance."""
    if np.linalg.norm(p - p.T) > 1e-12 * max(1.0, np.linalg.norm(p)):
        raise AssertionError("covariance is not symmetric")
    eigmin = float(np.linalg.eigvalsh(p)[0])
    if eigmin < -tol_factor * np.trace(p):
        raise AssertionError(f"covariance has negative eigenvalue {eigmin:.3e}")


def propagate(fs: FilterState, u: ImuSample, dt: float) -> FilterState:
    """Advance state and covariance by one IMU step.

    The covariance uses the first-order transition I + F dt with F, G frozen
    at the pre-step estimate: P <- Phi P Phi^T + G Qc G^T dt.
    """
    if not np.all(np.isfinite(fs.P)):
        raise FilterDivergence(f"covariance is non-finite at t={fs.x.time:.3f} ({fs.param.value})")
    omega_b, f_b = correct_imu(fs.x, u)
    sm = system_matrix(fs.param, fs.x, ImuSample(u.time, omega_b, f_b), fs.earth, fs.qc)
    x_new = propagate_state(fs.x, u, dt, fs.earth)
    phi = I15 + sm.F * dt
    p_new = phi @ fs.P @ phi.T + (sm.G @ sm.Qc @ sm.G.T) * dt
    p_new = _symmetrize(p_new)
    if not np.all(np.isfinite(p_new)):
        raise FilterDivergence(
            f"covariance became non-finite at t={x_new.time:.3f} ({fs.param.value})"
        )
    return replace(fs, x=x_new, P=p_new)


def _gain_and_update(
    p: np.ndarray, h: np.ndarray, r: np.ndarray, joseph: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Kalman gain and updated covariance via a symmetric factorization."""
    s = _symmetrize(h @ p @ h.T + r)
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > 1e12:
        raise FilterDivergence(f"innovation covariance is singular (cond={cond:.3e})")
    k = cho_solve(cho_factor(s), h @ p).T
    if joseph:
        ikh = I15 - k @ h
        p_new = ikh @ p @ ikh.T + k @ r @ k.T
    else:
        p_new = p - k @ (h @ p)
    return k, _symmetrize(p_new)


def _canonical_correction(xi: np.ndarray, injection: InjectionMode) -> np.ndarray:
    """Wrap a rotation-vector correction beyond pi onto its canonical
    representative (same rotation, magnitude <= pi).

    Transients under very large initial attitude errors can command such
    corrections; for the group-exponential injection the wrap is exact on the
    rotation.  First-order injection has no valid reading of them, so they
    are left for inject_error to reject.
    """
    norm = np.linalg.norm(xi[0:3])
    if norm >= np.pi and injection is InjectionMode.RETRACTION:
        xi = xi.copy()
        while norm >= np.pi:
            xi[0:3] *= 1.0 - 2.0 * np.pi / norm
            norm = np.linalg.norm(xi[0:3])
    return xi


def update_plain(fs: FilterState, obs: Observation) -> tuple[FilterState, UpdateReport]:
    """Kalman update in the filter's own parameterization.

    The predicted error state is zero; the estimated error K dz is injected
    into the navigation state and implicitly reset to zero.
    """
    dz = innovation(fs.x, obs, fs.earth, fs.time_tol)
    h = observation_matrix(fs.param, fs.x, obs.kind, fs.earth)
    k, p_new = _gain_and_update(fs.P, h, noise_covariance(obs), fs.joseph)
    xi = _canonical_correction(k @ dz, fs.injection)
    x_new = inject_error(fs.param, fs.x, xi, fs.earth, fs.injection)
    report = UpdateReport(dz, float(np.linalg.norm(k)), float(np.trace(fs.P)), float(np.trace(p_new)))
    return replace(fs, x=x_new, P=p_new), report


def update_switch(
    fs: FilterState,
    obs: Observation,
    target: ErrorParam,
    backward_at_predicted: bool = False,
) -> tuple[FilterState, UpdateReport]:
    """Covariance switch embedded in the update.

    The predicted covariance is switched into the target parameterization,
    the full update (gain, covariance, injection) runs there, and the updated
    covariance is switched back at the *updated* state.  Switching back at the
    predicted state instead (``backward_at_predicted``) degenerates to the
    plain update and is kept as a negative control.
    """
    if target is fs.param:
        return update_plain(fs, obs)
    dz = innovation(fs.x, obs, fs.earth, fs.time_tol)
    a_fwd = relation_matrix(fs.param, target, fs.x, fs.earth)
    p_target = _symmetrize(a_fwd @ fs.P @ a_fwd.T)
    h = observation_matrix(target, fs.x, obs.kind, fs.earth)
    k, p_target_new = _gain_and_update(p_target, h, noise_covariance(obs), fs.joseph)
    xi = _canonical_correction(k @ dz, fs.injection)
    x_new = inject_error(target, fs.x, xi, fs.earth, fs.injection)
    back_state = fs.x if backward_at_predicted else x_new
    a_back = relation_matrix(target, fs.param, back_state, fs.earth)
    p_new = _symmetrize(a_back @ p_target_new @ a_back.T)
    report = UpdateReport(
        dz, float(np.linalg.norm(k)), float(np.trace(fs.P)), float(np.trace(p_new)), target,
        switch_forward=a_fwd, switch_backward=a_back,
    )
    return replace(fs, x=x_new, P=p_new), report


def update_transform(
    fs: FilterState, obs: Observation, target: ErrorParam
) -> tuple[FilterState, UpdateReport]:
    """Plain update followed by the single post-update covariance
    transformation built from the predicted and updated states; the updated
    state itself is untouched."""
    x_minus = fs.x
    fs_new, report = update_plain(fs, obs)
    if target is fs.param:
        return fs_new, report
    t = transformation_matrix(fs.param, target, fs_new.x, x_minus, fs.earth)
    p_new = _symmetrize(t @ fs_new.P @ t.T)
    report.target = target
    report.transform = t
    report.trace_post = float(np.trace(p_new))
    return replace(fs_new, P=p_new), report


def step_observation(fs: FilterState, obs: Observation) -> tuple[FilterState, UpdateReport]:
    """Dispatch an observation through the configured strategy."""
    if fs.strategy.kind == "plain":
        return update_plain(fs, obs)
    target = fs.strategy.target_for(obs.kind, fs.param)
    if fs.strategy.kind == "switch":
        return update_switch(fs, obs, target)
    if fs.strategy.kind == "transform":
        return update_transform(fs, obs, target)
    raise ValueError(f"unknown strategy kind {fs.strategy.kind!r}")


def state_difference(a: NavState, b: NavState) -> float:
    """Largest per-block discrepancy between two navigation states."""
    return max(
        float(np.linalg.norm(lie.so3_log(a.att @ b.att.T))),
        float(np.linalg.norm(a.vel - b.vel)),
        float(np.linalg.norm(a.pos - b.pos)),
        float(np.linalg.norm(a.bg - b.bg)),
        float(np.linalg.norm(a.ba - b.ba)),
    )


@dataclass
class FirstUpdateReport:
    """Outcome of running several filters through their first update."""

    max_state_diff: float
    covariance_relation_residual: float
    subsequent_diffs: list
    filters: list


def first_update_identity_check(
    filters: list[FilterState],
    imu: list[ImuSample],
    dt: float,
    observations: list[Observation],
) -> FirstUpdateReport:
    """Propagate all filters through the same IMU stream, apply the first
    observation, and report the state discrepancy and the covariance relation
    residual P_a+ = A(x_pred) P_b+ A(x_pred)^T; any further observations are
    applied at matching timestamps to locate the divergence onset."""
    if not observations:
        raise ValueError("at least one observation is required")
    filters = [replace(f) for f in filters]
    obs_iter = iter(sorted(observations, key=lambda o: o.time))
    next_obs = next(obs_iter)
    first_diff = None
    residual = None
    subsequent = []

    def apply_due():
        nonlocal filters, next_obs, first_diff, residual
        while next_obs is not None and next_obs.time <= filters[0].x.time + 0.5 * dt:
            x_pred = filters[0].x.copy()
            updated = [step_observation(f, next_obs)[0] for f in filters]
            diff = (
                max(state_difference(updated[0].x, g.x) for g in updated[1:])
                if len(updated) > 1
                else 0.0
            )
            if first_diff is None:
                first_diff = diff
                ref = updated[0]
                worst = 0.0
                for g in updated[1:]:
                    a = relation_matrix(g.param, ref.param, x_pred, ref.earth)
                    expected = a @ g.P @ a.T
                    worst = max(
                        worst,
                        float(np.linalg.norm(ref.P - expected) / max(np.linalg.norm(ref.P), 1e-300)),
                    )
                residual = worst
            else:
                subsequent.append(diff)
            filters = updated
            next_obs = next(obs_iter, None)

    apply_due()
    for u in imu:
        if next_obs is None:
            break
        filters = [propagate(f, u, dt) for f in filters]
        apply_due()
    if first_diff is None:
        raise ValueError("no observation fell inside the IMU stream")
    return FirstUpdateReport(first_diff, residual, subsequent, filters)


# ---------------------------------------------------------------------------
# Batch helpers for long propagation-only runs.  These reproduce the per-step
# operations of propagate()/propagate_state() exactly but amortize the Python
# overhead; equivalence is pinned by tests.
# ---------------------------------------------------------------------------


def _skew_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _so3_exp_batch(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < lie.SMALL_ANGLE
    t2 = theta * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(theta) / theta)
        b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(theta)) / t2)
    px = _skew_batch(phi)
    return np.eye(3) + a[..., None, None] * px + b[..., None, None] * (px @ px)


if _HAVE_NUMBA:

    @njit(cache=True)
    def _att_loop_jit(att0, earth_half, body_half):  # pragma: no cover - jit
        n = body_half.shape[0]
        atts = np.empty((n + 1, 3, 3))
        att_mid = np.empty((n, 3, 3))
        atts[0] = att0
        att = att0.copy()
        eye3 = np.eye(3)
        for k in range(n):
            bh = body_half[k]
            mid = earth_half @ att @ bh
            att_mid[k] = mid
            att = earth_half @ mid @ bh
            att = att @ ((3.0 * eye3 - att.T @ att) / 2.0)
            atts[k + 1] = att
        return atts, att_mid

    @njit(cache=True)
    def _velpos_loop_jit(  # pragma: no cover - jit
        f_e, vel0, pos0, dt, omega_mat, omega_sq, g_const, mode, gm
    ):
        n = f_e.shape[0]
        vels = np.empty((n + 1, 3))
        poss = np.empty((n + 1, 3))
        vels[0] = vel0
        poss[0] = pos0
        vel = vel0.copy()
        pos = pos0.copy()

        for k in range(n):
            if mode == 0:
                grav0 = g_const
            else:
                d2 = pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]
                grav0 = -gm / (d2 * np.sqrt(d2)) * pos - omega_sq @ pos
            acc0 = f_e[k] - 2.0 * (omega_mat @ vel) + grav0
            vel_mid = vel + 0.5 * dt * acc0
            pos_mid = pos + 0.5 * dt * vel
            if mode == 0:
                grav1 = g_const
            else:
                d2 = pos_mid[0] * pos_mid[0] + pos_mid[1] * pos_mid[1] + pos_mid[2] * pos_mid[2]
                grav1 = -gm / (d2 * np.sqrt(d2)) * pos_mid - omega_sq @ pos_mid
            acc_mid = f_e[k] - 2.0 * (omega_mat @ vel_mid) + grav1
            vel_new = vel + dt * acc_mid
            pos = pos + 0.5 * dt * (vel + vel_new)
            vel = vel_new
            vels[k + 1] = vel
            poss[k + 1] = pos
        return vels, poss

    @njit(cache=True)
    def _cov_loop_jit(phi, w, p):  # pragma: no cover - jit
        n = phi.shape[0]
        for k in range(n):
            p = phi[k] @ p @ phi[k].T + w[k]
            p = (p + p.T) / 2.0
        return p


def mechanize_sequence(
    x0: NavState, gyro: np.ndarray, accel: np.ndarray, dt: float, earth: EarthModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run :func:`cteskf.ins.propagate_state` over raw IMU arrays.

    Returns attitude (N+1,3,3), velocity (N+1,3) and position (N+1,3)
    histories including the initial state.  Biases are held at x0's values.
    """
    n = len(gyro)
    omega_b = gyro - x0.bg
    f_b = accel - x0.ba
    earth_half = lie.so3_exp(earth.omega_ie * (-0.5 * dt))
    body_half = _so3_exp_batch(omega_b * (0.5 * dt))
    omega_mat = earth.omega_mat
    gravity = earth.gravity
    use_jit = _HAVE_NUMBA and earth.gravity_mode in ("constant", "spherical")

    if use_jit:
        atts, att_mid = _att_loop_jit(np.ascontiguousarray(x0.att), earth_half, body_half)
    else:
        atts = np.empty((n + 1, 3, 3))
        atts[0] = x0.att
        att_mid = np.empty((n, 3, 3))
        att = x0.att
        eye3 = np.eye(3)
        for k in range(n):
            bh = body_half[k]
            mid = earth_half @ att @ bh
            att_mid[k] = mid
            att = earth_half @ mid @ bh
            att = att @ ((3.0 * eye3 - att.T @ att) / 2.0)
            atts[k + 1] = att

    f_e = np.einsum("nij,nj->ni", att_mid, f_b)
    if use_jit:
        mode = 0 if earth.gravity_mode == "constant" else 1
        from .ins import EARTH_GM

        vels, poss = _velpos_loop_jit(
            f_e,
            np.ascontiguousarray(x0.vel),
            np.ascontiguousarray(x0.pos),
            dt,
            np.ascontiguousarray(omega_mat),
            np.ascontiguousarray(earth.omega_sq),
            np.ascontiguousarray(earth.gravity_const),
            mode,
            EARTH_GM,
        )
        return atts, vels, poss

    vels = np.empty((n + 1, 3))
    poss = np.empty((n + 1, 3))
    vels[0], poss[0] = x0.vel, x0.pos
    vel, pos = x0.vel, x0.pos
    for k in range(n):
        acc0 = f_e[k] - 2.0 * (omega_mat @ vel) + gravity(pos)
        vel_mid = vel + 0.5 * dt * acc0
        pos_mid = pos + 0.5 * dt * vel
        acc_mid = f_e[k] - 2.0 * (omega_mat @ vel_mid) + gravity(pos_mid)
        vel_new = vel + dt * acc_mid
        pos = pos + 0.5 * dt * (vel + vel_new)
        vel = vel_new
        vels[k + 1], poss[k + 1] = vel, pos
    return atts, vels, poss


def _system_sequence(
    param: ErrorParam,
    atts: np.ndarray,
    vels: np.ndarray,
    poss: np.ndarray,
    omega_b: np.ndarray,
    f_b: np.ndarray,
    earth: EarthModel,
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked F (N,15,15) and G (N,15,12) at the given state/input history."""
    n = len(omega_b)
    f = np.zeros((n, 15, 15))
    g = np.zeros((n, 15, 12))
    omega_mat = earth.omega_mat
    if param is ErrorParam.ADDITIVE_EKF:
        f[:, 0:3, 0:3] = -omega_mat
        f[:, 0:3, 9:12] = atts
        f[:, 3:6, 0:3] = -_skew_batch(np.einsum("nij,nj->ni", atts, f_b))
        f[:, 3:6, 3:6] = -2.0 * omega_mat
        f[:, 3:6, 12:15] = atts
        f[:, 6:9, 3:6] = np.eye(3)
        g[:, 0:3, 0:3] = atts
        g[:, 3:6, 3:6] = atts
    elif param is ErrorParam.LEFT_INVARIANT:
        ob = _skew_batch(omega_b)
        f[:, 0:3, 0:3] = -ob
        f[:, 0:3, 9:12] = -np.eye(3)
        f[:, 3:6, 0:3] = -_skew_batch(f_b)
        f[:, 3:6, 3:6] = -ob
        f[:, 3:6, 12:15] = -np.eye(3)
        f[:, 6:9, 3:6] = np.eye(3)
        f[:, 6:9, 6:9] = -ob
        g[:, 0:3, 0:3] = -np.eye(3)
        g[:, 3:6, 3:6] = -np.eye(3)
    else:
        nus = vels + np.cross(np.broadcast_to(earth.omega_ie, vels.shape), poss)
        g_ib = earth.gravity_batch(poss) + poss @ earth.omega_sq.T
        nu_x = _skew_batch(nus)
        pos_x = _skew_batch(poss)
        f[:, 0:3, 0:3] = -omega_mat
        f[:, 0:3, 9:12] = -atts
        f[:, 3:6, 0:3] = _skew_batch(g_ib)
        f[:, 3:6, 3:6] = -omega_mat
        f[:, 3:6, 9:12] = -(nu_x @ atts)
        f[:, 3:6, 12:15] = -atts
        f[:, 6:9, 3:6] = np.eye(3)
        f[:, 6:9, 6:9] = -omega_mat
        f[:, 6:9, 9:12] = -(pos_x @ atts)
        g[:, 0:3, 0:3] = -atts
        g[:, 3:6, 0:3] = -(nu_x @ atts)
        g[:, 3:6, 3:6] = -atts
        g[:, 6:9, 0:3] = -(pos_x @ atts)
    g[:, 9:12, 6:9] = np.eye(3)
    g[:, 12:15, 9:12] = np.eye(3)
    return f, g


def propagate_covariance_sequence(
    param: ErrorParam,
    p0: np.ndarray,
    atts: np.ndarray,
    vels: np.ndarray,
    poss: np.ndarray,
    gyro: np.ndarray,
    accel: np.ndarray,
    bg: np.ndarray,
    ba: np.ndarray,
    dt: float,
    qc: np.ndarray,
    earth: EarthModel,
    record_every: int = 0,
    chunk: int = 8192,
) -> tuple[np.ndarray, list]:
    """Covariance recursion P <- (I + F dt) P (I + F dt)^T + G Qc G^T dt over a
    precomputed state history; matches repeated :func:`propagate` calls.

    Returns the final covariance and, if record_every > 0, snapshots taken
    every that many steps (starting at step 0 with P0).
    """
    n = len(gyro)
    omega_b = gyro - bg
    f_b = accel - ba
    qdiag = np.diag(qc)
    p = _symmetrize(np.array(p0, dtype=float))
    history = []
    tmp1 = np.empty((15, 15))
    tmp2 = np.empty((15, 15))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        f_stack, g_stack = _system_sequence(
            param, atts[start:stop], vels[start:stop], poss[start:stop], omega_b[start:stop], f_b[start:stop], earth
        )
        phi = np.eye(15) + f_stack * dt
        w = np.einsum("nij,j,nkj->nik", g_stack, qdiag, g_stack) * dt
        if _HAVE_NUMBA and not record_every:
            p = _cov_loop_jit(phi, w, p)
            continue
        for k in range(stop - start):
            if record_every and (start + k) % record_every == 0:
                history.append(p.copy())
            np.matmul(phi[k], p, out=tmp1)
            np.matmul(tmp1, phi[k].T, out=tmp2)
            np.add(tmp2, w[k], out=tmp2)
            p = (tmp2 + tmp2.T) / 2.0
    if record_every and n % record_every == 0:
        history.append(p.copy())
    return p, history
