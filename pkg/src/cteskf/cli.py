"""Command-line front end: scenario simulation, filter runs, Monte Carlo
sweeps and the property-check battery.

Configuration files are flat ``key = value`` text with dotted keys and '#'
comments; see the README for the full key list.  Every command is
deterministic given the config and seed, and a malformed config is rejected
before any output file is created.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io, verify
from .sim import (
    ImuSpec,
    ScenarioConfig,
    generate_truth,
    monte_carlo_sweep,
    run_scenario,
    synthesize_gnss,
    synthesize_imu,
    synthesize_odo,
    VARIANTS,
)

log = logging.getLogger("cteskf")


class ConfigError(ValueError):
    pass


def parse_config(path: str) -> dict:
    """Flat dotted-key config parser; later assignments win."""
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    values = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{line_no}: empty key")
            values[key] = value
    return values


def _get(cfg: dict, key: str, default, cast):
    if key not in cfg:
        return default
    raw = cfg.pop(key)
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} ({exc})")


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected a boolean")


def _triple(raw: str):
    parts = [float(p) for p in raw.split(",")]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    return tuple(parts)


def scenario_from_config(cfg: dict, seed_override=None, injection_override=None) -> ScenarioConfig:
    imu = ImuSpec(
        _get(cfg, "imu.arw_deg_sqrt_h", 0.15, float),
        _get(cfg, "imu.vrw_ug_sqrt_hz", 20.0, float),
        _get(cfg, "imu.gyro_bias_deg_h", 2.0, float),
        _get(cfg, "imu.accel_bias_ug", 3.6, float),
    )
    seed = _get(cfg, "run.seed", 0, int)
    injection = _get(cfg, "scenario.injection", "retraction", str)
    try:
        scenario = ScenarioConfig(
            kind=_get(cfg, "scenario.kind", "circle", str),
            duration=_get(cfg, "scenario.duration", 60.0, float),
            speed=_get(cfg, "scenario.speed", 5.0, float),
            radius=_get(cfg, "scenario.radius", 500.0, float),
            lat_deg=_get(cfg, "scenario.lat_deg", 0.0, float),
            lon_deg=_get(cfg, "scenario.lon_deg", 0.0, float),
            imu_rate=_get(cfg, "imu.rate", 200.0, float),
            imu=imu,
            use_gnss=_get(cfg, "gnss.enable", True, _bool),
            gnss_rate=_get(cfg, "gnss.rate", 1.0, float),
            gnss_sigma=_get(cfg, "gnss.sigma", 0.2, float),
            use_odo=_get(cfg, "odo.enable", False, _bool),
            odo_rate=_get(cfg, "odo.rate", 10.0, float),
            odo_sigma=_get(cfg, "odo.sigma", 0.1, float),
            init_att_err_deg=_get(cfg, "scenario.init_att_err_deg", (60.0, 60.0, 120.0), _triple),
            init_vel_sigma=_get(cfg, "scenario.init_vel_sigma", 0.1, float),
            init_pos_sigma=_get(cfg, "scenario.init_pos_sigma", 1.0, float),
            seed=seed if seed_override is None else seed_override,
            earth_rotation=_get(cfg, "scenario.earth_rotation", True, _bool),
            gravity_mode=_get(cfg, "scenario.gravity", "spherical", str),
            anchor=_get(cfg, "scenario.anchor", "surface", str),
            injection=injection if injection_override is None else injection_override,
            settle_s=_get(cfg, "scenario.settle_s", None, float),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    return scenario


def variants_from_config(cfg: dict):
    raw = _get(cfg, "run.variants", "ekf,l-inekf,r-inekf,ct-ekf", str)
    variants = tuple(v.strip() for v in raw.split(",") if v.strip())
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown filter variant {v!r}; expected one of {sorted(VARIANTS)}")
    return variants


def _reject_leftovers(cfg: dict, accepted_prefixes):
    for key in cfg:
        if not any(key.startswith(p) for p in accepted_prefixes):
            raise ConfigError(f"unknown config key {key!r}")


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    scenario = scenario_from_config(cfg, args.seed)
    _reject_leftovers(cfg, ("sweep.", "run."))
    earth = scenario.earth()
    truth = generate_truth(scenario, earth)
    stream = synthesize_imu(truth, scenario.imu, scenario, earth, np.random.SeedSequence([scenario.seed, 1]))
    gnss = (
        synthesize_gnss(truth, scenario.gnss_sigma, scenario.gnss_rate, scenario, np.random.SeedSequence([scenario.seed, 2]))
        if scenario.use_gnss
        else []
    )
    odo = (
        synthesize_odo(truth, scenario.odo_sigma, scenario.odo_rate, scenario, np.random.SeedSequence([scenario.seed, 3]))
        if scenario.use_odo
        else []
    )
    os.makedirs(args.out, exist_ok=True)
    io.write_imu(os.path.join(args.out, "imu.csv"), stream.t, stream.gyro, stream.accel)
    io.write_gnss(os.path.join(args.out, "gnss_vel.csv"), gnss)
    io.write_odo(os.path.join(args.out, "odo.csv"), odo)
    io.write_truth(os.path.join(args.out, "truth.csv"), truth.t, truth.att, truth.vel, truth.pos)
    log.info("wrote dataset to %s (%d IMU samples, %d GNSS, %d ODO)", args.out, len(stream.t), len(gnss), len(odo))
    return 0


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    scenario = scenario_from_config(cfg, args.seed, args.injection)
    variants = variants_from_config(cfg)
    _reject_leftovers(cfg, ("sweep.",))
    os.makedirs(args.out, exist_ok=True)
    failed = False
    print(f"{'variant':<10} {'att RMSE [deg]':>15} {'vel RMSE [m/s]':>15} {'pos RMSE [m]':>14}")
    for variant in variants:
        series, metrics = run_scenario(scenario, variant)
        io.write_estimates(os.path.join(args.out, f"estimates_{variant}.csv"), series)
        if metrics["diverged"]:
            failed = True
            print(f"{variant:<10} DIVERGED: {metrics['diverged']}")
        else:
            print(
                f"{variant:<10} {metrics['att_rmse_total_deg']:>15.4f}"
                f" {np.linalg.norm(metrics['vel_rmse']):>15.4f}"
                f" {np.linalg.norm(metrics['pos_rmse']):>14.4f}"
            )
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    scenario = scenario_from_config(cfg, args.seed)
    variants = variants_from_config(cfg)
    yaw_min = _get(cfg, "sweep.yaw_min_deg", -150.0, float)
    yaw_max = _get(cfg, "sweep.yaw_max_deg", 150.0, float)
    yaw_step = _get(cfg, "sweep.yaw_step_deg", 30.0, float)
    n_seeds = _get(cfg, "sweep.seeds", 10, int)
    _reject_leftovers(cfg, ())
    if yaw_step <= 0 or yaw_max < yaw_min:
        raise ConfigError("sweep grid is empty or inverted")
    grid = np.arange(yaw_min, yaw_max + yaw_step / 2, yaw_step)
    result = monte_carlo_sweep(scenario, grid, n_seeds, variants=variants, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "rmse.csv")
    io.write_rmse(out, result)
    log.info("wrote %s (%d cells x %d variants)", out, len(grid), len(variants))
    for i, yaw in enumerate(result.yaw_deg):
        cells = " ".join(f"{v}={result.rmse_deg[i, j]:.3f}" for j, v in enumerate(result.variants))
        print(f"yaw {yaw:+7.1f} deg: {cells}")
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(args.level, args.seed, args.jobs)
    for r in results:
        print(r.line())
    payload = [
        {"name": r.name, "passed": r.passed, "measured": r.measured, "tolerance": r.tolerance, "detail": r.detail}
        for r in results
    ]
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} properties passed")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cteskf",
        description="Error-state Kalman filtering on SE2(3) with covariance switch/transformation strategies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim_p = sub.add_parser("simulate", help="synthesize and write a dataset")
    sim_p.add_argument("--config", required=True)
    sim_p.add_argument("--out", default="out")
    sim_p.add_argument("--seed", type=int, default=None)
    sim_p.set_defaults(func=cmd_simulate)

    run_p = sub.add_parser("run", help="run filter variants over a scenario")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--injection", choices=["first-order", "retraction"], default=None)
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="Monte Carlo yaw-error sweep")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", default="out")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.set_defaults(func=cmd_sweep)

    verify_p = sub.add_parser("verify", help="run the property-check battery")
    verify_p.add_argument("--level", choices=["fast", "full"], default="fast")
    verify_p.add_argument("--seed", type=int, default=0)
    verify_p.add_argument("--jobs", type=int, default=1)
    verify_p.add_argument("--out", default=None, help="write a JSON report here")
    verify_p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CTESKF_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, io.CsvSchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
