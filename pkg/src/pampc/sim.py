"""Deterministic closed-loop simulator: scenario definitions, receding-horizon
reference generation, point-of-interest selection, ground-truth propagation at
a fine step, and the metric suite used by the acceptance criteria.

The controller sees the ground-truth state (plus optional seeded noise) in
place of an onboard estimator; the plant is propagated with the same model the
controller predicts with, at a much finer step, optionally through a
first-order body-rate lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import perception as per
from .dynamics import QuadInput, QuadState, rk4_array
from .geometry import Array, quat_from_axis_angle, quat_rotate, quat_tilt_angle
from .ocp import OcpConfig, Reference, check_bounds
from .perception import EmptyLandmarkSet
from .solver import SolverState, rti_step, shift_warm_start

CIRCLE = "circle"
HOVER_TO_HOVER = "hover_to_hover"
DARKNESS = "darkness"
HOVER_REGULATION = "hover_regulation"

#: angular hysteresis before the darkness scenario switches landmark clusters
CLUSTER_SWITCH_HYSTERESIS = math.radians(15.0)


class SimDiverged(Exception):
    """Closed-loop state left the sane envelope (non-finite or > 100 m out)."""


@dataclass
class Scenario:
    """One experiment: a reference-generating rule plus landmark clusters."""

    kind: str
    duration: float
    clusters: list[Array]
    # circle parameters
    center: Array = field(default_factory=lambda: np.zeros(2))
    radius: float = 1.8
    speed: float = 3.0
    altitude: float = 1.5
    # hover-to-hover parameters
    p1: Array = field(default_factory=lambda: np.array([0.0, -1.5, 1.2]))
    p2: Array = field(default_factory=lambda: np.array([0.0, 1.5, 1.2]))
    # darkness parameters
    waypoints: Array = field(default_factory=lambda: np.zeros((0, 3)))
    cruise_speed: float = 1.5
    # hover regulation parameters
    pose: Array = field(default_factory=lambda: np.array([0.0, 0.0, 1.5]))

    def __post_init__(self) -> None:
        if self.kind not in (CIRCLE, HOVER_TO_HOVER, DARKNESS, HOVER_REGULATION):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.kind == CIRCLE and not self.radius > 0:
            raise ValueError("circle radius must be positive")
        if len(self.clusters) < 1:
            raise ValueError("scenario needs at least one landmark cluster")
        self.clusters = [np.atleast_2d(np.asarray(c, dtype=float)) for c in self.clusters]
        self.center = np.asarray(self.center, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.p2 = np.asarray(self.p2, dtype=float)
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        self.pose = np.asarray(self.pose, dtype=float)
        if self.kind == DARKNESS and self.waypoints.shape[0] < 2:
            raise ValueError("darkness scenario needs at least two waypoints")

    def all_landmarks(self) -> Array:
        return np.vstack(self.clusters)


def circle_scenario(
    speed: float = 3.0,
    radius: float = 1.8,
    altitude: float = 1.5,
    duration: float = 20.0,
    poi_height: float = 0.05,
) -> Scenario:
    """Circular flight around a small feature pile at the circle center.

    The default pile sits near the floor so its bearing from the reference
    orbit is close to the camera's 45-degree depression axis.
    """
    pile = np.array(
        [
            [0.12, 0.10, poi_height - 0.03],
            [-0.10, 0.12, poi_height + 0.06],
            [0.08, -0.12, poi_height],
            [-0.10, -0.08, poi_height + 0.02],
        ]
    )
    return Scenario(
        kind=CIRCLE,
        duration=duration,
        clusters=[pile],
        radius=radius,
        speed=speed,
        altitude=altitude,
    )


def hover_to_hover_scenario(duration: float = 8.0) -> Scenario:
    """Pose jump between two hover points at equal height, looking at a
    feature cluster off to the side of the path."""
    cluster = np.array(
        [
            [1.5, 0.08, 0.55],
            [1.45, -0.1, 0.45],
            [1.55, 0.02, 0.5],
        ]
    )
    return Scenario(kind=HOVER_TO_HOVER, duration=duration, clusters=[cluster])


def darkness_scenario(duration: float = 12.0, altitude: float = 1.3) -> Scenario:
    """Rectangle flight in the dark with two illuminated spots: a near spot the
    path passes close by and a far spot on the wall beyond it."""
    wp = np.array(
        [
            [-2.0, -1.5, altitude],
            [2.0, -1.5, altitude],
            [2.0, 1.5, altitude],
            [-2.0, 1.5, altitude],
            [-2.0, -1.5, altitude],
        ]
    )
    near = np.array(
        [
            [2.15, -0.25, 0.1],
            [2.1, -0.15, 0.15],
            [2.2, -0.2, 0.12],
        ]
    )
    # beyond the near spot along the east leg's passing bearing, at the wall
    # base, so it takes over exactly when the near spot slips under the camera
    far = np.array(
        [
            [3.1, -0.25, 0.08],
            [3.1, -0.15, 0.12],
            [3.1, -0.2, 0.1],
        ]
    )
    return Scenario(
        kind=DARKNESS,
        duration=duration,
        clusters=[near, far],
        waypoints=wp,
        cruise_speed=1.5,
    )


def hover_regulation_scenario(duration: float = 5.0) -> Scenario:
    """Stationary hover with a centered landmark (equilibrium checks)."""
    cluster = np.array([[1.1, 0.0, 0.5]])
    return Scenario(kind=HOVER_REGULATION, duration=duration, clusters=[cluster], pose=np.array([0.0, 0.0, 1.5]))


def _circle_ref(scenario: Scenario, t: float) -> tuple[Array, Array]:
    w = scenario.speed / scenario.radius
    th = w * t
    p = np.array(
        [
            scenario.center[0] + scenario.radius * np.cos(th),
            scenario.center[1] + scenario.radius * np.sin(th),
            scenario.altitude,
        ]
    )
    v = scenario.speed * np.array([-np.sin(th), np.cos(th), 0.0])
    return p, v


def _darkness_ref(scenario: Scenario, t: float) -> tuple[Array, Array]:
    wp = scenario.waypoints
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    total = float(seg_len.sum())
    s = np.clip(scenario.cruise_speed * t, 0.0, total)
    acc = 0.0
    for i, L in enumerate(seg_len):
        if s <= acc + L or i == len(seg_len) - 1:
            frac = 0.0 if L == 0 else (s - acc) / L
            p = wp[i] + frac * seg[i]
            v = scenario.cruise_speed * seg[i] / L if (L > 0 and s < total) else np.zeros(3)
            return p, v
        acc += L
    return wp[-1].astype(float), np.zeros(3)


def reference_position(scenario: Scenario, t: float) -> Array:
    """Instantaneous reference position (the tracking-error baseline)."""
    if scenario.kind == CIRCLE:
        return _circle_ref(scenario, t)[0]
    if scenario.kind == HOVER_TO_HOVER:
        return scenario.p1 if t < 0 else scenario.p2
    if scenario.kind == DARKNESS:
        return _darkness_ref(scenario, t)[0]
    return scenario.pose


def reference_for(scenario: Scenario, t: float, config: OcpConfig) -> Reference:
    """Receding-horizon state/input reference starting at time t."""
    n = config.N
    X = np.zeros((n, 10))
    X[:, 6] = 1.0  # identity attitude reference
    hover = np.array([config.params.g, 0.0, 0.0, 0.0])
    U = np.tile(hover, (n - 1, 1))
    if scenario.kind == CIRCLE:
        th = (scenario.speed / scenario.radius) * (t + np.arange(n) * config.dt)
        X[:, 0] = scenario.center[0] + scenario.radius * np.cos(th)
        X[:, 1] = scenario.center[1] + scenario.radius * np.sin(th)
        X[:, 2] = scenario.altitude
        X[:, 3] = -scenario.speed * np.sin(th)
        X[:, 4] = scenario.speed * np.cos(th)
    elif scenario.kind == HOVER_TO_HOVER:
        X[:, 0:3] = np.where((t + np.arange(n) * config.dt < 0)[:, None], scenario.p1, scenario.p2)
    elif scenario.kind == DARKNESS:
        for k in range(n):
            p, v = _darkness_ref(scenario, t + k * config.dt)
            X[k, 0:3] = p
            X[k, 3:6] = v
    else:
        X[:, 0:3] = scenario.pose
    return Reference(X=X, U=U)


def _yaw_towards(p: Array, target: Array) -> Array:
    d = target - p
    yaw = math.atan2(d[1], d[0])
    return quat_from_axis_angle([0.0, 0.0, 1.0], yaw)


def initial_state(scenario: Scenario, t0: float = 0.0) -> QuadState:
    """State on the reference at time t0 with the camera yawed toward the POI."""
    poi = per.centroid(list(scenario.clusters[0]))
    if scenario.kind == CIRCLE:
        p, v = _circle_ref(scenario, t0)
        return QuadState(p=p, v=v, q=_yaw_towards(p, poi))
    if scenario.kind == HOVER_TO_HOVER:
        p = scenario.p1 if t0 < 0 else scenario.p2
        return QuadState(p=p, q=_yaw_towards(p, poi))
    if scenario.kind == DARKNESS:
        p = scenario.waypoints[0]
        return QuadState(p=p, q=_yaw_towards(p, poi))
    return QuadState(p=scenario.pose, q=_yaw_towards(scenario.pose, poi))


def _cluster_axis_angle(
    cluster: Array, x: QuadState, extr: per.CameraExtrinsics
) -> float:
    """Angle between the optical axis and the bearing to a cluster centroid."""
    c = np.mean(cluster, axis=0)
    origin = x.p + quat_rotate(x.q, extr.t_BC)
    d = c - origin
    dist = np.linalg.norm(d)
    if dist == 0.0:
        return 0.0
    axis = quat_rotate(x.q, quat_rotate(extr.q_BC, np.array([0.0, 0.0, 1.0])))
    return float(np.arccos(np.clip(np.dot(axis, d / dist), -1.0, 1.0)))


def active_poi(
    scenario: Scenario,
    x: QuadState,
    extr: per.CameraExtrinsics,
    current: int | None = None,
) -> tuple[Array, int]:
    """Point of interest the controller should center.

    Non-darkness scenarios use the centroid of all landmarks.  The darkness
    scenario picks the cluster closest in angle to the current optical axis,
    switching away from the held cluster only when another beats it by the
    hysteresis margin.
    """
    if len(scenario.clusters) == 0:
        raise EmptyLandmarkSet("scenario has no landmark clusters")
    if scenario.kind != DARKNESS or len(scenario.clusters) == 1:
        return per.centroid(list(scenario.all_landmarks())), 0
    angles = [_cluster_axis_angle(c, x, extr) for c in scenario.clusters]
    if current is None:
        best = int(np.argmin(angles))
    else:
        best = current
        for j, a in enumerate(angles):
            if j != current and a < angles[best] - CLUSTER_SWITCH_HYSTERESIS:
                best = j
    return per.centroid(list(scenario.clusters[best])), best


@dataclass
class SimConfig:
    """Plant-side configuration of a closed-loop run."""

    sim_dt: float = 1e-3
    control_period: float = 0.01
    estimate_noise_std: Array = field(default_factory=lambda: np.zeros(10))
    rate_loop_tau: float = 0.0
    seed: int = 0
    #: unlogged controller run-in before t = 0 (the real loops run
    #: continuously; scenario references extend to negative time)
    preroll: float = 1.0

    def __post_init__(self) -> None:
        self.estimate_noise_std = np.broadcast_to(
            np.asarray(self.estimate_noise_std, dtype=float), (10,)
        ).copy()
        if self.sim_dt > self.control_period:
            raise ValueError("sim_dt must not exceed control_period")
        ratio = self.control_period / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control_period must be an integer multiple of sim_dt")


@dataclass
class SimRecord:
    """One control step of the closed loop."""

    t: float
    x: Array
    u: Array
    z: Array | None  # perception vector, None on a depth fault
    depth: float
    visible: bool
    poi_index: int
    solve_time_us: float
    kkt: float
    qp_iters: int
    status: str
    predicted: Array | None = None  # (N, 10) open-loop plan, kept on request


@dataclass
class SimLog:
    records: list[SimRecord]

    def __len__(self) -> int:
        return len(self.records)

    def poi_switches(self) -> int:
        idx = [r.poi_index for r in self.records if r.poi_index >= 0]
        return int(np.sum(np.diff(idx) != 0)) if len(idx) > 1 else 0


def run_closed_loop(
    scenario: Scenario,
    ocp_config: OcpConfig,
    sim_config: SimConfig,
    store_predictions: bool = False,
) -> SimLog:
    """Simulate the receding-horizon loop; deterministic given the seed."""
    with threadpool_limits(limits=1):
        return _run_closed_loop(scenario, ocp_config, sim_config, store_predictions)


def _run_closed_loop(
    scenario: Scenario,
    ocp_config: OcpConfig,
    sim_config: SimConfig,
    store_predictions: bool,
) -> SimLog:
    # single-threaded BLAS: the solver's matrices are tiny, and worker-pool
    # synchronization stalls would otherwise dominate the loop's tail latency
    rng = np.random.default_rng(sim_config.seed)
    extr, intr = ocp_config.extrinsics, ocp_config.intrinsics
    noisy = bool(np.any(sim_config.estimate_noise_std > 0))

    n_sub = int(round(sim_config.control_period / sim_config.sim_dt))
    n_ctrl = int(round(scenario.duration / sim_config.control_period))
    n_pre = int(round(sim_config.preroll / sim_config.control_period))
    x_true = initial_state(scenario, -n_pre * sim_config.control_period).as_array()
    # the guess grid advances one stage only once per discretization step,
    # not per control loop (the loop runs faster than the transcription)
    loops_per_stage = max(1, int(round(ocp_config.dt / sim_config.control_period)))

    solver_state: SolverState | None = None
    poi_index: int | None = None
    omega_actual = np.zeros(3)
    records: list[SimRecord] = []

    for k in range(-n_pre, n_ctrl + 1):
        t = k * sim_config.control_period
        est = x_true.copy()
        if noisy:
            est += rng.normal(size=10) * sim_config.estimate_noise_std
        x_est = QuadState.from_array(est)
        if solver_state is None:
            solver_state = SolverState.init_hover(x_est, ocp_config)

        poi, poi_index = active_poi(scenario, x_est, extr, poi_index)
        ref = reference_for(scenario, t, ocp_config)
        u_cmd, predicted, diag = rti_step(solver_state, x_est, ocp_config, ref, poi)

        if k >= 0:
            # perception log from the ground truth and the commanded input
            truth = QuadState.from_array(x_true)
            p_c = per.point_in_camera(truth, extr, poi)
            depth = float(p_c[2])
            if depth > ocp_config.depth_epsilon:
                u_px, v_px = per.project(p_c, intr, ocp_config.depth_epsilon)
                p_c_dot = per.point_velocity_in_camera(truth, u_cmd, extr, poi)
                ud, vd = per.projection_velocity(p_c, p_c_dot, intr, ocp_config.depth_epsilon)
                z = np.array([u_px, v_px, ud, vd])
                visible = abs(u_px) <= intr.half_width and abs(v_px) <= intr.half_height
            else:
                z = None
                visible = False

            records.append(
                SimRecord(
                    t=t,
                    x=x_true.copy(),
                    u=u_cmd.as_array(),
                    z=z,
                    depth=depth,
                    visible=visible,
                    poi_index=poi_index,
                    solve_time_us=diag.solve_time_us,
                    kkt=diag.kkt_residual,
                    qp_iters=diag.qp_iterations,
                    status=diag.status,
                    predicted=predicted if store_predictions else None,
                )
            )
        if k == n_ctrl:
            break

        u_arr = u_cmd.as_array()
        for _ in range(n_sub):
            if sim_config.rate_loop_tau > 0:
                alpha = 1.0 - math.exp(-sim_config.sim_dt / sim_config.rate_loop_tau)
                omega_actual += alpha * (u_arr[1:4] - omega_actual)
                u_act = np.concatenate([[u_arr[0]], omega_actual])
            else:
                u_act = u_arr
            x_true = rk4_array(x_true, u_act, sim_config.sim_dt, ocp_config.params.g)
        if not np.all(np.isfinite(x_true)) or np.linalg.norm(x_true[0:3]) > 100.0:
            raise SimDiverged(f"state left the sane envelope at t={t:.2f}s")
        if (k + 1) % loops_per_stage == 0:
            shift_warm_start(solver_state)

    return SimLog(records=records)


@dataclass
class MetricReport:
    """Quantitative summary of one run; keys mirror the metrics JSON."""

    center_distance_mean_px: float
    center_distance_max_px: float
    fov_visible_fraction: float
    projection_speed_mean_px_s: float
    max_altitude_m: float
    max_abs_pitch_rad: float
    input_bound_violations: int
    solve_time_mean_us: float
    solve_time_max_us: float
    solve_time_std_us: float
    tracking_rmse_m: float

    def to_dict(self) -> dict:
        return {
            "center_distance_mean_px": self.center_distance_mean_px,
            "center_distance_max_px": self.center_distance_max_px,
            "fov_visible_fraction": self.fov_visible_fraction,
            "projection_speed_mean_px_s": self.projection_speed_mean_px_s,
            "max_altitude_m": self.max_altitude_m,
            "max_abs_pitch_rad": self.max_abs_pitch_rad,
            "input_bound_violations": self.input_bound_violations,
            "solve_time_mean_us": self.solve_time_mean_us,
            "solve_time_max_us": self.solve_time_max_us,
            "solve_time_std_us": self.solve_time_std_us,
            "tracking_rmse_m": self.tracking_rmse_m,
        }


def compute_metrics(log: SimLog, scenario: Scenario, ocp_config: OcpConfig) -> MetricReport:
    """Aggregate a log into the report; image metrics use depth-valid records.

    The pitch metric is the attitude tilt from upright, which is invariant to
    the free heading and captures the thrust-direction excursion the
    hover-to-hover comparison cares about.
    """
    if len(log.records) == 0:
        raise ValueError("cannot compute metrics of an empty log")
    zs = np.array([r.z for r in log.records if r.z is not None], dtype=float).reshape(-1, 4)
    if zs.shape[0]:
        dist = np.hypot(zs[:, 0], zs[:, 1])
        speed = np.hypot(zs[:, 2], zs[:, 3])
        center_mean, center_max = float(dist.mean()), float(dist.max())
        speed_mean = float(speed.mean())
    else:
        center_mean = center_max = speed_mean = math.nan

    visible = np.array([r.visible for r in log.records])
    tilt = [quat_tilt_angle(r.x[6:10]) for r in log.records]
    violations = 0
    for r in log.records:
        rep = check_bounds(QuadInput.from_array(r.u), r.x[3:6], ocp_config.bounds)
        if rep.input_min_slack() < -1e-9:
            violations += 1
    solve = np.array([r.solve_time_us for r in log.records])
    err = np.array(
        [np.linalg.norm(r.x[0:3] - reference_position(scenario, r.t)) for r in log.records]
    )
    return MetricReport(
        center_distance_mean_px=center_mean,
        center_distance_max_px=center_max,
        fov_visible_fraction=float(visible.mean()),
        projection_speed_mean_px_s=speed_mean,
        max_altitude_m=float(max(r.x[2] for r in log.records)),
        max_abs_pitch_rad=float(max(tilt)),
        input_bound_violations=violations,
        solve_time_mean_us=float(solve.mean()),
        solve_time_max_us=float(solve.max()),
        solve_time_std_us=float(solve.std()),
        tracking_rmse_m=float(np.sqrt(np.mean(err**2))),
    )
