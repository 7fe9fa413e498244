"""Camera model: landmark position in the camera frame, pinhole projection,
and the analytic image-plane velocity of a static landmark.

Frames: the camera is rigidly mounted on the body with extrinsics
(t_BC, q_BC).  Camera axes follow the standard pinhole convention: z_C is
the optical axis, x_C points right in the image, y_C points down.  A
body-forward camera therefore has z_C along body x; the default rig is
additionally pitched down 45 degrees about the body y axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import (
    Array,
    cross3,
    quat_from_axis_angle,
    quat_identity,
    quat_inverse,
    quat_mul,
    quat_normalize,
    quat_rotate,
)
from .dynamics import QuadInput, QuadState

#: Depth floor [m] below which the projection is considered undefined.
DEPTH_EPSILON = 0.01


class DepthNonPositive(Exception):
    """Landmark is at or behind the camera plane (depth <= epsilon)."""


class EmptyLandmarkSet(Exception):
    """An operation that needs landmarks received none."""


@dataclass
class CameraExtrinsics:
    """Rigid body-to-camera transform: camera position t_BC and attitude q_BC."""

    t_BC: Array = field(default_factory=lambda: np.zeros(3))
    q_BC: Array = field(default_factory=quat_identity)

    def __post_init__(self) -> None:
        self.t_BC = np.asarray(self.t_BC, dtype=float)
        self.q_BC = quat_normalize(np.asarray(self.q_BC, dtype=float))


@dataclass
class CameraIntrinsics:
    """Pinhole focal lengths [px] and image half-extents about the principal point."""

    fx: float = 220.0
    fy: float = 220.0
    half_width: float = 320.0
    half_height: float = 240.0

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "half_width", "half_height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class PerceptionState:
    """Landmark projection (u, v) [px] and its image-plane velocity [px/s]."""

    u: float
    v: float
    u_dot: float
    v_dot: float

    def as_array(self) -> Array:
        return np.array([self.u, self.v, self.u_dot, self.v_dot])


# camera looking along body x (z_C forward, x_C = -y_B, y_C = -z_B)
_Q_FORWARD = quat_mul(
    quat_from_axis_angle([0.0, 0.0, 1.0], -np.pi / 2),
    quat_from_axis_angle([1.0, 0.0, 0.0], -np.pi / 2),
)


def forward_camera(tilt_down: float = 0.0, t_BC: Array | None = None) -> CameraExtrinsics:
    """Body-forward camera pitched down by `tilt_down` radians."""
    q = quat_mul(quat_from_axis_angle([0.0, 1.0, 0.0], tilt_down), _Q_FORWARD)
    t = np.array([0.1, 0.0, 0.0]) if t_BC is None else np.asarray(t_BC, dtype=float)
    return CameraExtrinsics(t_BC=t, q_BC=q)


def default_extrinsics() -> CameraExtrinsics:
    """Default rig: camera 0.1 m ahead of the body origin, tilted down 45 degrees."""
    return forward_camera(tilt_down=np.pi / 4)


def camera_point_array(x: Array, t_bc: Array, q_bc: Array, p_w: Array) -> Array:
    """Landmark position in the camera frame; broadcasts over leading axes of x."""
    x = np.asarray(x, dtype=float)
    q_wb = x[..., 6:10]
    q_wc = quat_mul(q_wb, q_bc)
    cam_origin = x[..., 0:3] + quat_rotate(q_wb, t_bc)
    return quat_rotate(quat_inverse(q_wc), p_w - cam_origin)


def point_in_camera(x: QuadState, extr: CameraExtrinsics, p_W: Array) -> Array:
    """p_C = (q_WB q_BC)^-1 ⊙ (p_W - (q_WB ⊙ t_BC + p_WB))."""
    return camera_point_array(x.as_array(), extr.t_BC, extr.q_BC, np.asarray(p_W, dtype=float))


def project(p_C: Array, intr: CameraIntrinsics, depth_epsilon: float = DEPTH_EPSILON) -> tuple[float, float]:
    """Pinhole projection u = fx x/z, v = fy y/z.  Raises DepthNonPositive."""
    x, y, z = p_C
    if not z > depth_epsilon:
        raise DepthNonPositive(f"landmark depth {z:.4g} m is not positive")
    return intr.fx * x / z, intr.fy * y / z


def camera_point_velocity_array(x: Array, u: Array, t_bc: Array, q_bc: Array, p_w: Array) -> Array:
    """Time derivative of the camera-frame landmark position (static landmark)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q_wb = x[..., 6:10]
    omega_b = u[..., 1:4]
    p_c = camera_point_array(x, t_bc, q_bc, p_w)
    omega_c = quat_rotate(quat_inverse(q_bc), omega_b)
    lever = quat_rotate(q_wb, cross3(omega_b, np.broadcast_to(t_bc, omega_b.shape)))
    v_c = quat_rotate(quat_inverse(quat_mul(q_wb, q_bc)), x[..., 3:6] + lever)
    return -cross3(omega_c, p_c) - v_c


def point_velocity_in_camera(
    x: QuadState, u_in: QuadInput, extr: CameraExtrinsics, p_W: Array
) -> Array:
    """ṗ_C = -ω_C × p_C - v_C with ω_C, v_C the camera-frame twist of the rig."""
    return camera_point_velocity_array(
        x.as_array(), u_in.as_array(), extr.t_BC, extr.q_BC, np.asarray(p_W, dtype=float)
    )


def projection_velocity(
    p_C: Array,
    p_C_dot: Array,
    intr: CameraIntrinsics,
    depth_epsilon: float = DEPTH_EPSILON,
) -> tuple[float, float]:
    """Image velocity by the quotient rule: u̇ = fx (ẋ z - x ż)/z²  etc."""
    x, y, z = p_C
    xd, yd, zd = p_C_dot
    if not z > depth_epsilon:
        raise DepthNonPositive(f"landmark depth {z:.4g} m is not positive")
    return intr.fx * (xd * z - x * zd) / (z * z), intr.fy * (yd * z - y * zd) / (z * z)


def projection_velocity_compact(
    p_C: Array,
    p_C_dot: Array,
    intr: CameraIntrinsics,
    depth_epsilon: float = DEPTH_EPSILON,
) -> tuple[float, float]:
    """Cross-product form of the image velocity; identical to the quotient rule."""
    z = p_C[2]
    if not z > depth_epsilon:
        raise DepthNonPositive(f"landmark depth {z:.4g} m is not positive")
    cross = np.cross(p_C_dot, p_C)
    return -intr.fx / (z * z) * cross[1], intr.fy / (z * z) * cross[0]


def perception_state(
    x: QuadState,
    u_in: QuadInput,
    extr: CameraExtrinsics,
    intr: CameraIntrinsics,
    p_W: Array,
    depth_epsilon: float = DEPTH_EPSILON,
) -> PerceptionState:
    """Full perception vector z = [u, v, u̇, v̇] for one landmark."""
    p_c = point_in_camera(x, extr, p_W)
    u, v = project(p_c, intr, depth_epsilon)
    p_c_dot = point_velocity_in_camera(x, u_in, extr, p_W)
    u_dot, v_dot = projection_velocity(p_c, p_c_dot, intr, depth_epsilon)
    return PerceptionState(u=u, v=v, u_dot=u_dot, v_dot=v_dot)


def perception_vec_array(
    x: Array,
    u: Array,
    t_bc: Array,
    q_bc: Array,
    fx: float,
    fy: float,
    p_w: Array,
    depth_epsilon: float = DEPTH_EPSILON,
) -> tuple[Array, Array]:
    """Batched perception vector (..., 4) plus raw depth (...,).

    The depth used in the quotients is clamped at epsilon, making this a total
    function suitable for solver linearization; callers consult the returned
    raw depth to fade or reject clamped rows (see the ocp module).
    """
    p_c = camera_point_array(x, t_bc, q_bc, p_w)
    p_c_dot = camera_point_velocity_array(x, u, t_bc, q_bc, p_w)
    depth = p_c[..., 2]
    z_safe = np.maximum(depth, depth_epsilon)
    out = np.empty(p_c.shape[:-1] + (4,))
    out[..., 0] = fx * p_c[..., 0] / z_safe
    out[..., 1] = fy * p_c[..., 1] / z_safe
    zz = z_safe * z_safe
    out[..., 2] = fx * (p_c_dot[..., 0] * z_safe - p_c[..., 0] * p_c_dot[..., 2]) / zz
    out[..., 3] = fy * (p_c_dot[..., 1] * z_safe - p_c[..., 1] * p_c_dot[..., 2]) / zz
    return out, depth


def centroid(landmarks: Sequence[Array]) -> Array:
    """Arithmetic mean of a non-empty landmark set."""
    if len(landmarks) == 0:
        raise EmptyLandmarkSet("cannot take the centroid of zero landmarks")
    return np.mean(np.asarray(landmarks, dtype=float), axis=0)
