"""Quaternion and rotation algebra shared by the dynamics, perception and solver layers.

Conventions: Hamilton product, scalar-first storage (w, x, y, z).  A body
attitude quaternion q_WB rotates body-frame vectors into the world frame,
v_W = quat_rotate(q_WB, v_B).  All functions broadcast over leading axes,
so a (..., 4) stack of quaternions works wherever a single one does.
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray

#: Unit-norm tolerance enforced after renormalization.
NORM_TOL = 1e-9


def quat_identity() -> Array:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: Array) -> Array:
    """Return q scaled to unit norm (scalar-first, shape (..., 4))."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    return q / n


def quat_from_axis_angle(axis: Array, angle: float) -> Array:
    """Unit quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_mul(a: Array, b: Array) -> Array:
    """Hamilton product a ⊗ b, renormalized."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return quat_normalize(out)


def quat_inverse(q: Array) -> Array:
    """Conjugate of a unit quaternion (its inverse)."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_rotate(q: Array, v: Array) -> Array:
    """Rotate v by the rotation induced by q (active rotation, R(q) v)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., 0]
    qx, qy, qz = q[..., 1], q[..., 2], q[..., 3]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # t = qv x v + w v, result = v + 2 qv x t (cross products unrolled)
    tx = qy * vz - qz * vy + w * vx
    ty = qz * vx - qx * vz + w * vy
    tz = qx * vy - qy * vx + w * vz
    return np.stack(
        [
            vx + 2.0 * (qy * tz - qz * ty),
            vy + 2.0 * (qz * tx - qx * tz),
            vz + 2.0 * (qx * ty - qy * tx),
        ],
        axis=-1,
    )


def cross3(a: Array, b: Array) -> Array:
    """Cross product with the components unrolled (cheaper than np.cross on
    small stacks); broadcasts over leading axes."""
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def rotation_matrix(q: Array) -> Array:
    """3x3 matrix R with R @ v == quat_rotate(q, v)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def omega_skew4(omega: Array) -> Array:
    """4x4 angular-rate matrix Λ(ω) with q̇ = ½ Λ(ω) q for body rates ω."""
    wx, wy, wz = omega
    return np.array(
        [
            [0.0, -wx, -wy, -wz],
            [wx, 0.0, wz, -wy],
            [wy, -wz, 0.0, wx],
            [wz, wy, -wx, 0.0],
        ]
    )


def quat_derivative(q: Array, omega: Array) -> Array:
    """Attitude kinematics q̇ = ½ Λ(ω) q (equivalently ½ q ⊗ (0, ω))."""
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ox, oy, oz = omega[..., 0], omega[..., 1], omega[..., 2]
    return 0.5 * np.stack(
        [
            -ox * x - oy * y - oz * z,
            ox * w + oz * y - oy * z,
            oy * w - oz * x + ox * z,
            oz * w + oy * x - ox * y,
        ],
        axis=-1,
    )


def quat_left_matrix(q: Array) -> Array:
    """4x4 matrix L(q) with q ⊗ p == L(q) @ p."""
    w, x, y, z = q
    return np.array(
        [
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ]
    )


def quat_rotation_angle(q: Array) -> float:
    """Total rotation angle of q in [0, pi]."""
    q = np.asarray(q, dtype=float)
    return 2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0]))


def quat_tilt_angle(q: Array) -> float:
    """Angle between the body z axis and the world z axis (0 when upright)."""
    w, x, y, z = q
    cos_tilt = 1.0 - 2.0 * (x * x + y * y)
    return float(np.arccos(np.clip(cos_tilt, -1.0, 1.0)))


def quat_yaw(q: Array) -> float:
    """Heading about the world z axis (ZYX convention), used for plots/metrics."""
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))
