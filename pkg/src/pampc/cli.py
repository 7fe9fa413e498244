"""Batch entry point: load a run configuration, execute closed-loop scenarios
or parameter sweeps, and emit CSV logs plus metrics JSON.

The config is a YAML file with a mandatory `version` field.  Unknown keys are
hard errors (silent default drift is the main reproducibility hazard); missing
keys fall back to the library defaults.  Metrics are always recomputed from
the re-read CSV so the written log and the metrics JSON can never disagree.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import ocp as ocp_mod
from . import perception as per
from . import sim as sim_mod
from . import verify as verify_mod
from .dynamics import ModelParams

ENV_OUTPUT_ROOT = "PAMPC_OUTPUT_ROOT"

CSV_COLUMNS = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz",
    "c", "wx", "wy", "wz", "u_px", "v_px", "udot", "vdot", "depth_m",
    "visible", "solve_us", "kkt", "qp_iters", "status",
]


class ConfigInvalid(Exception):
    """Configuration rejected; the message names the offending key."""


_SCHEMA = {
    "version": None,
    "scenario": {
        "kind": None, "duration": None, "radius": None, "speed": None,
        "altitude": None, "center": None, "poi_height": None,
        "p1": None, "p2": None, "waypoints": None, "cruise_speed": None,
        "pose": None, "clusters": None,
    },
    "ocp": {
        "N": None, "dt": None, "depth_epsilon": None, "gravity": None,
        "weights": {
            "position": None, "velocity": None, "attitude": None,
            "perception": None, "input": None,
        },
        "bounds": {"c_min": None, "c_max": None, "omega_max": None, "v_max": None},
        "camera": {
            "fx": None, "fy": None, "half_width": None, "half_height": None,
            "t_bc": None, "tilt_down_deg": None,
        },
    },
    "sim": {
        "sim_dt": None, "control_period": None, "estimate_noise_std": None,
        "rate_loop_tau": None, "seed": None, "preroll": None,
    },
    "output": {
        "directory": None, "log_csv": None, "metrics_json": None,
        "predicted_trajectories": None, "timing_in_csv": None,
    },
}


def _check_keys(node, schema, prefix=""):
    if not isinstance(node, dict):
        return
    for key, value in node.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigInvalid(f"unknown config key: {path}")
        sub = schema[key]
        if isinstance(sub, dict):
            _check_keys(value, sub, f"{path}.")


@dataclass
class RunConfig:
    scenario: sim_mod.Scenario
    ocp: ocp_mod.OcpConfig
    sim: sim_mod.SimConfig
    output_dir: Path
    log_csv: bool = True
    metrics_json: bool = True
    predicted_trajectories: bool = False
    timing_in_csv: bool = True


def _build_scenario(raw: dict) -> sim_mod.Scenario:
    kind = raw.get("kind", "circle")
    kwargs = {}
    if "duration" in raw:
        kwargs["duration"] = float(raw["duration"])
    try:
        if kind == "circle":
            for k in ("radius", "speed", "altitude", "poi_height"):
                if k in raw:
                    kwargs[k] = float(raw[k])
            sc = sim_mod.circle_scenario(**kwargs)
            if "center" in raw:
                sc.center = np.asarray(raw["center"], dtype=float)
        elif kind == "hover_to_hover":
            sc = sim_mod.hover_to_hover_scenario(**kwargs)
            if "p1" in raw:
                sc.p1 = np.asarray(raw["p1"], dtype=float)
            if "p2" in raw:
                sc.p2 = np.asarray(raw["p2"], dtype=float)
        elif kind == "darkness":
            sc = sim_mod.darkness_scenario(**kwargs)
            if "waypoints" in raw:
                sc.waypoints = np.atleast_2d(np.asarray(raw["waypoints"], dtype=float))
            if "cruise_speed" in raw:
                sc.cruise_speed = float(raw["cruise_speed"])
        elif kind == "hover_regulation":
            sc = sim_mod.hover_regulation_scenario(**kwargs)
            if "pose" in raw:
                sc.pose = np.asarray(raw["pose"], dtype=float)
        else:
            raise ConfigInvalid(f"scenario.kind: unknown kind {kind!r}")
        if "clusters" in raw:
            sc.clusters = [np.atleast_2d(np.asarray(c, dtype=float)) for c in raw["clusters"]]
        return sc
    except ValueError as exc:
        raise ConfigInvalid(f"scenario: {exc}") from exc


def _build_ocp(raw: dict) -> ocp_mod.OcpConfig:
    n = int(raw.get("N", 20))
    if n < 2:
        raise ConfigInvalid("ocp.N: must be at least 2")
    cam = raw.get("camera", {})
    try:
        intr = per.CameraIntrinsics(
            fx=float(cam.get("fx", 220.0)),
            fy=float(cam.get("fy", 220.0)),
            half_width=float(cam.get("half_width", 320.0)),
            half_height=float(cam.get("half_height", 240.0)),
        )
        tilt = math.radians(float(cam.get("tilt_down_deg", 45.0)))
        extr = per.forward_camera(tilt_down=tilt, t_BC=cam.get("t_bc"))

        weights_raw = raw.get("weights", {})
        base = ocp_mod.default_weights(intr)
        position = float(weights_raw.get("position", 40.0))
        velocity = float(weights_raw.get("velocity", 10.0))
        attitude = np.asarray(weights_raw.get("attitude", [2.0, 2.0, 0.0]), dtype=float)
        qx = ocp_mod.state_weight_matrix(position, velocity, attitude)
        qp = (
            np.diag(np.asarray(weights_raw["perception"], dtype=float))
            if "perception" in weights_raw
            else base.Qp
        )
        r = (
            np.diag(np.asarray(weights_raw["input"], dtype=float))
            if "input" in weights_raw
            else base.R
        )
        weights = ocp_mod.CostWeights(Qx_stage=qx, Qx_terminal=qx.copy(), Qp=qp, R=r)

        bounds_raw = raw.get("bounds", {})
        bounds = ocp_mod.Bounds(
            c_min=float(bounds_raw.get("c_min", 2.0)),
            c_max=float(bounds_raw.get("c_max", 19.6)),
            omega_max=float(bounds_raw.get("omega_max", 3.0)),
            v_max=float(bounds_raw.get("v_max", 5.0)),
        )
        return ocp_mod.OcpConfig(
            N=n,
            dt=float(raw.get("dt", 0.1)),
            weights=weights,
            bounds=bounds,
            extrinsics=extr,
            intrinsics=intr,
            depth_epsilon=float(raw.get("depth_epsilon", per.DEPTH_EPSILON)),
            params=ModelParams(g=float(raw.get("gravity", 9.81))),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"ocp: {exc}") from exc


def _build_sim(raw: dict) -> sim_mod.SimConfig:
    try:
        return sim_mod.SimConfig(
            sim_dt=float(raw.get("sim_dt", 1e-3)),
            control_period=float(raw.get("control_period", 0.01)),
            estimate_noise_std=np.asarray(raw.get("estimate_noise_std", 0.0), dtype=float),
            rate_loop_tau=float(raw.get("rate_loop_tau", 0.0)),
            seed=int(raw.get("seed", 0)),
            preroll=float(raw.get("preroll", 1.0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"sim: {exc}") from exc


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply `--set dotted.key=value` overrides onto the raw config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config root must be a mapping")
    raw = apply_overrides(raw, overrides or [])
    if "version" not in raw:
        raise ConfigInvalid("missing config key: version")
    if raw["version"] != 1:
        raise ConfigInvalid(f"version: unsupported config version {raw['version']!r}")
    _check_keys(raw, _SCHEMA)

    out_raw = raw.get("output", {})
    out_dir = Path(out_raw.get("directory", "out"))
    root = os.environ.get(ENV_OUTPUT_ROOT)
    if root:
        out_dir = Path(root) / out_dir
    return RunConfig(
        scenario=_build_scenario(raw.get("scenario", {})),
        ocp=_build_ocp(raw.get("ocp", {})),
        sim=_build_sim(raw.get("sim", {})),
        output_dir=out_dir,
        log_csv=bool(out_raw.get("log_csv", True)),
        metrics_json=bool(out_raw.get("metrics_json", True)),
        predicted_trajectories=bool(out_raw.get("predicted_trajectories", False)),
        timing_in_csv=bool(out_raw.get("timing_in_csv", True)),
    )


def write_log_csv(log: sim_mod.SimLog, path: Path, timing: bool = True) -> None:
    """Write the exact-order log schema; floats use shortest round-trip repr."""
    lines = [",".join(CSV_COLUMNS)]
    for r in log.records:
        z = r.z if r.z is not None else [math.nan] * 4
        solve = r.solve_time_us if timing else 0.0
        vals = [
            repr(float(r.t)),
            *[repr(float(v)) for v in r.x],
            *[repr(float(v)) for v in r.u],
            *[repr(float(v)) for v in z],
            repr(float(r.depth)),
            str(int(r.visible)),
            repr(float(solve)),
            repr(float(r.kkt)),
            str(int(r.qp_iters)),
            r.status,
        ]
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")


def read_log_csv(path: Path) -> sim_mod.SimLog:
    text = path.read_text().strip().split("\n")
    header = text[0].split(",")
    if header != CSV_COLUMNS:
        raise ConfigInvalid(f"log {path} does not match the CSV schema")
    records = []
    for line in text[1:]:
        f = line.split(",")
        x = np.array([float(v) for v in f[1:11]])
        u = np.array([float(v) for v in f[11:15]])
        z = np.array([float(v) for v in f[15:19]])
        records.append(
            sim_mod.SimRecord(
                t=float(f[0]),
                x=x,
                u=u,
                z=None if math.isnan(z[0]) else z,
                depth=float(f[19]),
                visible=bool(int(f[20])),
                poi_index=-1,
                solve_time_us=float(f[21]),
                kkt=float(f[22]),
                qp_iters=int(f[23]),
                status=f[24],
            )
        )
    return sim_mod.SimLog(records=records)


def write_predictions_csv(log: sim_mod.SimLog, path: Path) -> None:
    cols = ["t", "stage", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz"]
    lines = [",".join(cols)]
    for r in log.records:
        if r.predicted is None:
            continue
        for s, row in enumerate(r.predicted):
            lines.append(
                ",".join([repr(float(r.t)), str(s)] + [repr(float(v)) for v in row])
            )
    path.write_text("\n".join(lines) + "\n")


def metrics_json_text(metrics: sim_mod.MetricReport) -> str:
    return json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n"


def _run_one(cfg: RunConfig, stem: str) -> sim_mod.MetricReport:
    log = sim_mod.run_closed_loop(
        cfg.scenario, cfg.ocp, cfg.sim, store_predictions=cfg.predicted_trajectories
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = cfg.output_dir / f"{stem}_log.csv"
    if cfg.log_csv:
        write_log_csv(log, csv_path, timing=cfg.timing_in_csv)
        # recompute from the written file so log and metrics cannot disagree
        log_for_metrics = read_log_csv(csv_path)
    else:
        log_for_metrics = log
    metrics = sim_mod.compute_metrics(log_for_metrics, cfg.scenario, cfg.ocp)
    if cfg.metrics_json:
        (cfg.output_dir / f"{stem}_metrics.json").write_text(metrics_json_text(metrics))
    if cfg.predicted_trajectories:
        write_predictions_csv(log, cfg.output_dir / f"{stem}_predicted.csv")
    return metrics


def cmd_run(config_path: str, overrides: list[str] | None = None) -> int:
    try:
        cfg = load_config(config_path, overrides)
        metrics = _run_one(cfg, Path(config_path).stem)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except sim_mod.SimDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(metrics_json_text(metrics), end="")
    return 0


def cmd_sweep(
    config_path: str,
    parameter: str,
    values: list,
    workers: int | None = None,
    overrides: list[str] | None = None,
) -> int:
    if not values:
        print("config error: sweep needs a non-empty value list", file=sys.stderr)
        return 2
    try:
        base = load_config(config_path, overrides)  # validates before spawning workers
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    stem = Path(config_path).stem

    def one(value):
        ov = list(overrides or []) + [f"{parameter}={value}"]
        cfg = load_config(config_path, ov)
        return _run_one(cfg, f"{stem}_{parameter.replace('.', '_')}_{value}")

    results: dict = {}
    failed = False
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers or os.cpu_count()) as pool:
        futures = {pool.submit(one, v): v for v in values}
        for fut in concurrent.futures.as_completed(futures):
            v = futures[fut]
            try:
                results[v] = fut.result()
            except (ConfigInvalid, sim_mod.SimDiverged, OSError) as exc:
                print(f"sweep value {v}: {exc}", file=sys.stderr)
                failed = True

    lines = None
    keys: list[str] = []
    for v in values:
        if v in results:
            d = results[v].to_dict()
            if lines is None:
                keys = sorted(d)
                lines = [",".join([parameter] + keys)]
            lines.append(",".join([str(v)] + [repr(d[k]) for k in keys]))
    if lines:
        base.output_dir.mkdir(parents=True, exist_ok=True)
        table = base.output_dir / f"{stem}_sweep_{parameter.replace('.', '_')}.csv"
        table.write_text("\n".join(lines) + "\n")
        print(f"sweep table: {table}")
    return 1 if failed else 0


def cmd_verify(fast: bool = False) -> int:
    results = verify_mod.run_all(fast=fast)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f"  [{r.detail}]" if r.detail else ""
        print(f"{status}  {r.name}: max error {r.max_error:.3e} (tolerance {r.tolerance:.1e}){detail}")
        ok = ok and r.passed
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pampc",
        description="Perception-aware quadrotor MPC: closed-loop runs, sweeps, and oracle checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one closed-loop scenario from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    p_sweep = sub.add_parser("sweep", help="run one scenario over a list of parameter values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, help="dotted config key, e.g. scenario.speed")
    p_sweep.add_argument("--values", required=True, help="comma-separated value list")
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    p_verify = sub.add_parser("verify", help="run the embedded oracle suites")
    p_verify.add_argument("--fast", action="store_true", help="smaller sample counts")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.overrides)
    if args.command == "sweep":
        values = [yaml.safe_load(v) for v in args.values.split(",")]
        return cmd_sweep(args.config, args.param, values, args.workers, args.overrides)
    return cmd_verify(fast=args.fast)


if __name__ == "__main__":
    sys.exit(main())
