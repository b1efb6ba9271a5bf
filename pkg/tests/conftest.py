"""Shared scenario helpers for the filter-level and acceptance tests."""

import numpy as np
import pytest

from cteskf import lie
from cteskf.errorstate import ErrorParam, InjectionMode, process_noise, relation_matrix
from cteskf.filter import FilterState, Strategy
from cteskf.ins import EarthModel, ImuSample, NavState
from cteskf.sensors import GnssVelObs, OdoObs

# Aviation-grade IMU noise (per-axis densities, SI)
QUIET_ARW = 0.001 * np.pi / 180.0 / 60.0  # rad/sqrt(s)
QUIET_VRW = 5e-6 * 9.80665  # m/s^2/sqrt(Hz)
QUIET_QC = process_noise(
    QUIET_ARW**2,
    QUIET_VRW**2,
    (0.01 * np.pi / 180.0 / 3600.0) ** 2 / 3600.0,
    (1e-6 * 9.80665) ** 2 / 3600.0,
)


def quiet_earth() -> EarthModel:
    """No Earth rotation, no gravity: between updates the error-relation
    matrices stay constant, so the discrete covariance propagations of all
    parameterizations coincide exactly and the update-equivalence identities can
    be checked at numerical precision."""
    return EarthModel(omega_ie=np.zeros(3), gravity_mode="constant", gravity_const=np.zeros(3))


def initial_filter_bank(
    x0: NavState,
    p0_ekf: np.ndarray,
    configs: list[tuple[ErrorParam, Strategy]],
    qc: np.ndarray,
    earth: EarthModel,
    injection: InjectionMode = InjectionMode.FIRST_ORDER,
) -> list[FilterState]:
    """Filters sharing the state x0 with relation-equivalent covariances."""
    bank = []
    for param, strategy in configs:
        a = relation_matrix(ErrorParam.ADDITIVE_EKF, param, x0, earth)
        bank.append(
            FilterState(x0.copy(), a @ p0_ekf @ a.T, param, strategy, injection, qc.copy(), earth)
        )
    return bank


def default_p0(att0: np.ndarray, att_err_rad: np.ndarray) -> np.ndarray:
    """Diagonal initial EKF covariance with the attitude block mapped from
    body-frame angle uncertainties through the estimated attitude."""
    p0 = np.diag(
        np.concatenate(
            [
                att_err_rad**2 + 1e-10,
                np.full(3, 0.01),
                np.full(3, 1.0),
                np.full(3, (1e-5) ** 2),
                np.full(3, (1e-4) ** 2),
            ]
        )
    )
    p0[0:3, 0:3] = att0 @ (np.diag(att_err_rad**2) + 1e-10 * np.eye(3)) @ att0.T
    return p0


class StationaryQuietScenario:
    """Stationary truth in the quiet Earth model with seeded sensor noise.

    Truth attitude is identity, truth velocity zero; the ideal IMU reads zero
    on both channels, so gyro/accel streams are pure noise.
    """

    def __init__(
        self,
        duration: float,
        imu_rate: float,
        seed: int,
        att_err_deg=(1.0, 1.0, 2.0),
        gnss_rate: float = 0.0,
        odo_rate: float = 0.0,
        gnss_sigma: float = 0.2,
        odo_sigma: float = 0.1,
        pos0=(100.0, 50.0, 20.0),
        noise_scale: float = 1.0,
    ):
        rng = np.random.default_rng(seed)
        self.earth = quiet_earth()
        self.dt = 1.0 / imu_rate
        n = int(round(duration * imu_rate))
        self.pos0 = np.asarray(pos0, dtype=float)
        err = np.radians(np.asarray(att_err_deg, dtype=float))
        att0 = lie.so3_exp(err)
        self.x0 = NavState(att0, np.zeros(3), self.pos0.copy())
        self.p0 = default_p0(att0, err)
        self.truth = NavState(np.eye(3), np.zeros(3), self.pos0.copy())

        self.imu = [
            ImuSample(
                (k + 1) * self.dt,
                rng.normal(scale=noise_scale * QUIET_ARW / np.sqrt(self.dt), size=3),
                rng.normal(scale=noise_scale * QUIET_VRW / np.sqrt(self.dt), size=3),
            )
            for k in range(n)
        ]
        self.obs = []
        for rate, sigma, ctor in (
            (gnss_rate, gnss_sigma, lambda t, v, s: GnssVelObs(t, v, s)),
            (odo_rate, odo_sigma, lambda t, v, s: OdoObs(t, v, s)),
        ):
            if rate <= 0.0:
                continue
            n_obs = int(round((duration - 1.0) * rate)) + 1
            for j in range(n_obs):
                t = 1.0 + j / rate
                if t > duration + 1e-9:
                    break
                self.obs.append(ctor(round(t, 9), rng.normal(scale=sigma, size=3), np.full(3, sigma)))
        self.obs.sort(key=lambda o: o.time)

    def run(self, filters, on_update=None):
        """Drive the filter bank; on_update(filters) is called after each
        observation epoch."""
        from cteskf.filter import propagate, step_observation

        filters = list(filters)
        obs_iter = iter(self.obs)
        pending = next(obs_iter, None)
        for u in self.imu:
            filters = [propagate(f, u, self.dt) for f in filters]
            while pending is not None and pending.time <= filters[0].x.time + 0.5 * self.dt:
                filters = [step_observation(f, pending)[0] for f in filters]
                if on_update is not None:
                    on_update(filters)
                pending = next(obs_iter, None)
        return filters


@pytest.fixture(scope="session")
def short_quiet_scenario():
    return StationaryQuietScenario(20.0, 100.0, seed=7, gnss_rate=1.0, odo_rate=10.0)
