"""Perception-aware nonlinear model predictive control for a quadrotor with a
rigidly mounted camera, plus a deterministic closed-loop simulator.

The controller couples action objectives (trajectory tracking under input
bounds) with perception objectives (keeping a landmark centered in the image
and its projection velocity small) in one receding-horizon optimization,
solved by a Gauss-Newton SQP condensed to a dense box QP and executed one
iteration per control loop.
"""

from .dynamics import (
    ModelParams,
    QuadInput,
    QuadState,
    dynamics_derivative,
    rk4_step,
    rk4_step_with_jacobians,
)
from .geometry import (
    quat_derivative,
    quat_from_axis_angle,
    quat_identity,
    quat_inverse,
    quat_mul,
    quat_normalize,
    quat_rotate,
)
from .ocp import (
    Bounds,
    CostWeights,
    OcpConfig,
    Reference,
    check_bounds,
    default_weights,
    stage_cost,
    terminal_cost,
    total_cost,
)
from .perception import (
    CameraExtrinsics,
    CameraIntrinsics,
    DepthNonPositive,
    EmptyLandmarkSet,
    PerceptionState,
    centroid,
    default_extrinsics,
    forward_camera,
    perception_state,
    point_in_camera,
    point_velocity_in_camera,
    project,
    projection_velocity,
)
from .sim import (
    MetricReport,
    Scenario,
    SimConfig,
    SimDiverged,
    SimLog,
    active_poi,
    circle_scenario,
    compute_metrics,
    darkness_scenario,
    hover_regulation_scenario,
    hover_to_hover_scenario,
    reference_for,
    run_closed_loop,
)
from .solver import (
    CondensedQp,
    QpSolution,
    SolverState,
    linearize_and_condense,
    rti_step,
    shift_warm_start,
    solve_qp,
)

__version__ = "0.1.0"
