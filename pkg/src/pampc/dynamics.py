"""Quadrotor rigid-body model: collective thrust + body rates drive a 10-state
(position, velocity, attitude quaternion) ODE, integrated with classical RK4.

The flattened state layout is [px py pz vx vy vz qw qx qy qz] and the input
layout is [c wx wy wz], with c the mass-normalized collective thrust.  The
analytic one-step Jacobians used by the SQP are chained through the four RK4
stages of the un-renormalized map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Array, quat_identity, quat_normalize

X_DIM = 10
U_DIM = 4

_EYE10 = np.eye(X_DIM)


@dataclass
class ModelParams:
    """Physical constants; only gravity is modeled (collective-thrust abstraction)."""

    g: float = 9.81

    def __post_init__(self) -> None:
        if not self.g > 0:
            raise ValueError("gravity magnitude must be positive")


@dataclass
class QuadState:
    """World position p, world velocity v, attitude quaternion q (q_WB)."""

    p: Array = field(default_factory=lambda: np.zeros(3))
    v: Array = field(default_factory=lambda: np.zeros(3))
    q: Array = field(default_factory=quat_identity)

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.q = quat_normalize(np.asarray(self.q, dtype=float))

    def as_array(self) -> Array:
        return np.concatenate([self.p, self.v, self.q])

    @classmethod
    def from_array(cls, x: Array) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return cls(p=x[0:3].copy(), v=x[3:6].copy(), q=x[6:10].copy())


@dataclass
class QuadInput:
    """Mass-normalized collective thrust c [m/s^2] and body rates omega [rad/s]."""

    c: float = 0.0
    omega: Array = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.c = float(self.c)
        self.omega = np.asarray(self.omega, dtype=float)

    def as_array(self) -> Array:
        return np.concatenate([[self.c], self.omega])

    @classmethod
    def from_array(cls, u: Array) -> "QuadInput":
        u = np.asarray(u, dtype=float)
        return cls(c=float(u[0]), omega=u[1:4].copy())

    @classmethod
    def hover(cls, params: ModelParams | None = None) -> "QuadInput":
        g = params.g if params is not None else 9.81
        return cls(c=g, omega=np.zeros(3))


def deriv_array(x: Array, u: Array, g: float = 9.81) -> Array:
    """State derivative f(x, u) on flattened arrays; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1 and u.ndim == 1:
        # scalar fast path: plain float arithmetic beats tiny-array ufuncs
        # in the per-stage RK4 chains that dominate the control loop
        qw, qx, qy, qz = x[6], x[7], x[8], x[9]
        c, ox, oy, oz = u[0], u[1], u[2], u[3]
        return np.array(
            [
                x[3],
                x[4],
                x[5],
                c * 2.0 * (qx * qz + qw * qy),
                c * 2.0 * (qy * qz - qw * qx),
                c * (1.0 - 2.0 * (qx * qx + qy * qy)) - g,
                0.5 * (-ox * qx - oy * qy - oz * qz),
                0.5 * (ox * qw + oz * qy - oy * qz),
                0.5 * (oy * qw - oz * qx + ox * qz),
                0.5 * (oz * qw + oy * qx - ox * qy),
            ]
        )
    qw, qx, qy, qz = x[..., 6], x[..., 7], x[..., 8], x[..., 9]
    c = u[..., 0]
    ox, oy, oz = u[..., 1], u[..., 2], u[..., 3]

    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (X_DIM,)))
    out[..., 0:3] = x[..., 3:6]
    # thrust along body z rotated to world, plus gravity
    out[..., 3] = c * 2.0 * (qx * qz + qw * qy)
    out[..., 4] = c * 2.0 * (qy * qz - qw * qx)
    out[..., 5] = c * (1.0 - 2.0 * (qx * qx + qy * qy)) - g
    out[..., 6] = 0.5 * (-ox * qx - oy * qy - oz * qz)
    out[..., 7] = 0.5 * (ox * qw + oz * qy - oy * qz)
    out[..., 8] = 0.5 * (oy * qw - oz * qx + ox * qz)
    out[..., 9] = 0.5 * (oz * qw + oy * qx - ox * qy)
    return out


def dynamics_derivative(
    state: QuadState, inp: QuadInput, params: ModelParams | None = None
) -> tuple[Array, Array, Array]:
    """(ṗ, v̇, q̇) of the continuous model."""
    g = params.g if params is not None else 9.81
    d = deriv_array(state.as_array(), inp.as_array(), g)
    return d[0:3], d[3:6], d[6:10]


def rk4_array(x: Array, u: Array, dt: float, g: float = 9.81) -> Array:
    """One classical RK4 step with zero-order-hold input; quaternion renormalized."""
    k1 = deriv_array(x, u, g)
    k2 = deriv_array(x + 0.5 * dt * k1, u, g)
    k3 = deriv_array(x + 0.5 * dt * k2, u, g)
    k4 = deriv_array(x + dt * k3, u, g)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = np.asarray(out)
    out[..., 6:10] = quat_normalize(out[..., 6:10])
    return out


def rk4_step(
    state: QuadState, inp: QuadInput, dt: float, params: ModelParams | None = None
) -> QuadState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = params.g if params is not None else 9.81
    return QuadState.from_array(rk4_array(state.as_array(), inp.as_array(), dt, g))


def _deriv_jacobians(x: Array, u: Array) -> tuple[Array, Array]:
    """Continuous Jacobians (∂f/∂x, ∂f/∂u) at a single flattened point."""
    qw, qx, qy, qz = x[6], x[7], x[8], x[9]
    c, ox, oy, oz = u[0], u[1], u[2], u[3]

    Jx = np.zeros((X_DIM, X_DIM))
    Jx[0, 3] = Jx[1, 4] = Jx[2, 5] = 1.0
    # ∂v̇/∂q for v̇ = c * (third column of R(q)) + g_vec
    c2 = 2.0 * c
    Jx[3, 6] = c2 * qy
    Jx[3, 7] = c2 * qz
    Jx[3, 8] = c2 * qw
    Jx[3, 9] = c2 * qx
    Jx[4, 6] = -c2 * qx
    Jx[4, 7] = -c2 * qw
    Jx[4, 8] = c2 * qz
    Jx[4, 9] = c2 * qy
    Jx[5, 7] = -2.0 * c2 * qx
    Jx[5, 8] = -2.0 * c2 * qy
    # ∂q̇/∂q = ½ Λ(ω)
    Jx[6, 7] = -0.5 * ox
    Jx[6, 8] = -0.5 * oy
    Jx[6, 9] = -0.5 * oz
    Jx[7, 6] = 0.5 * ox
    Jx[7, 8] = 0.5 * oz
    Jx[7, 9] = -0.5 * oy
    Jx[8, 6] = 0.5 * oy
    Jx[8, 7] = -0.5 * oz
    Jx[8, 9] = 0.5 * ox
    Jx[9, 6] = 0.5 * oz
    Jx[9, 7] = 0.5 * oy
    Jx[9, 8] = -0.5 * ox

    Ju = np.zeros((X_DIM, U_DIM))
    Ju[3, 0] = 2.0 * (qx * qz + qw * qy)
    Ju[4, 0] = 2.0 * (qy * qz - qw * qx)
    Ju[5, 0] = 1.0 - 2.0 * (qx * qx + qy * qy)
    # ∂q̇/∂ω = ½ ∂(q ⊗ (0, ω))/∂ω
    Ju[6, 1] = -0.5 * qx
    Ju[6, 2] = -0.5 * qy
    Ju[6, 3] = -0.5 * qz
    Ju[7, 1] = 0.5 * qw
    Ju[7, 2] = -0.5 * qz
    Ju[7, 3] = 0.5 * qy
    Ju[8, 1] = 0.5 * qz
    Ju[8, 2] = 0.5 * qw
    Ju[8, 3] = -0.5 * qx
    Ju[9, 1] = -0.5 * qy
    Ju[9, 2] = 0.5 * qx
    Ju[9, 3] = 0.5 * qw
    return Jx, Ju


def rk4_jacobians_array(x: Array, u: Array, dt: float, g: float = 9.81) -> tuple[Array, Array, Array]:
    """(x_next, A, B) for one RK4 step: A = ∂x⁺/∂x, B = ∂x⁺/∂u of the
    un-renormalized map, chained analytically through the four stages."""
    k1 = deriv_array(x, u, g)
    x2 = x + 0.5 * dt * k1
    k2 = deriv_array(x2, u, g)
    x3 = x + 0.5 * dt * k2
    k3 = deriv_array(x3, u, g)
    x4 = x + dt * k3
    k4 = deriv_array(x4, u, g)

    J1x, J1u = _deriv_jacobians(x, u)
    J2x, J2u = _deriv_jacobians(x2, u)
    J3x, J3u = _deriv_jacobians(x3, u)
    J4x, J4u = _deriv_jacobians(x4, u)

    eye = _EYE10
    dk1x = J1x
    dk2x = J2x @ (eye + 0.5 * dt * dk1x)
    dk3x = J3x @ (eye + 0.5 * dt * dk2x)
    dk4x = J4x @ (eye + dt * dk3x)

    dk1u = J1u
    dk2u = J2u + 0.5 * dt * (J2x @ dk1u)
    dk3u = J3u + 0.5 * dt * (J3x @ dk2u)
    dk4u = J4u + dt * (J4x @ dk3u)

    A = eye + (dt / 6.0) * (dk1x + 2 * dk2x + 2 * dk3x + dk4x)
    B = (dt / 6.0) * (dk1u + 2 * dk2u + 2 * dk3u + dk4u)

    x_next = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    x_next[6:10] = quat_normalize(x_next[6:10])
    return x_next, A, B


def rk4_step_with_jacobians(
    state: QuadState, inp: QuadInput, dt: float, params: ModelParams | None = None
) -> tuple[QuadState, Array, Array]:
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = params.g if params is not None else 9.81
    x_next, A, B = rk4_jacobians_array(state.as_array(), inp.as_array(), dt, g)
    return QuadState.from_array(x_next), A, B


def _deriv_jacobians_batch(x: Array, u: Array) -> tuple[Array, Array]:
    """Continuous Jacobians stacked over the leading axis; x (n,10), u (n,4)."""
    n = x.shape[0]
    qw, qx, qy, qz = x[:, 6], x[:, 7], x[:, 8], x[:, 9]
    c, ox, oy, oz = u[:, 0], u[:, 1], u[:, 2], u[:, 3]

    Jx = np.zeros((n, X_DIM, X_DIM))
    Jx[:, 0, 3] = Jx[:, 1, 4] = Jx[:, 2, 5] = 1.0
    c2 = 2.0 * c
    Jx[:, 3, 6] = c2 * qy
    Jx[:, 3, 7] = c2 * qz
    Jx[:, 3, 8] = c2 * qw
    Jx[:, 3, 9] = c2 * qx
    Jx[:, 4, 6] = -c2 * qx
    Jx[:, 4, 7] = -c2 * qw
    Jx[:, 4, 8] = c2 * qz
    Jx[:, 4, 9] = c2 * qy
    Jx[:, 5, 7] = -2.0 * c2 * qx
    Jx[:, 5, 8] = -2.0 * c2 * qy
    Jx[:, 6, 7] = -0.5 * ox
    Jx[:, 6, 8] = -0.5 * oy
    Jx[:, 6, 9] = -0.5 * oz
    Jx[:, 7, 6] = 0.5 * ox
    Jx[:, 7, 8] = 0.5 * oz
    Jx[:, 7, 9] = -0.5 * oy
    Jx[:, 8, 6] = 0.5 * oy
    Jx[:, 8, 7] = -0.5 * oz
    Jx[:, 8, 9] = 0.5 * ox
    Jx[:, 9, 6] = 0.5 * oz
    Jx[:, 9, 7] = 0.5 * oy
    Jx[:, 9, 8] = -0.5 * ox

    Ju = np.zeros((n, X_DIM, U_DIM))
    Ju[:, 3, 0] = 2.0 * (qx * qz + qw * qy)
    Ju[:, 4, 0] = 2.0 * (qy * qz - qw * qx)
    Ju[:, 5, 0] = 1.0 - 2.0 * (qx * qx + qy * qy)
    Ju[:, 6, 1] = -0.5 * qx
    Ju[:, 6, 2] = -0.5 * qy
    Ju[:, 6, 3] = -0.5 * qz
    Ju[:, 7, 1] = 0.5 * qw
    Ju[:, 7, 2] = -0.5 * qz
    Ju[:, 7, 3] = 0.5 * qy
    Ju[:, 8, 1] = 0.5 * qz
    Ju[:, 8, 2] = 0.5 * qw
    Ju[:, 8, 3] = -0.5 * qx
    Ju[:, 9, 1] = -0.5 * qy
    Ju[:, 9, 2] = 0.5 * qx
    Ju[:, 9, 3] = 0.5 * qw
    return Jx, Ju


def rk4_jacobians_batch(x: Array, u: Array, dt: float, g: float = 9.81) -> tuple[Array, Array]:
    """One-step Jacobians (A, B) stacked over independent stage points.

    Identical chaining as rk4_jacobians_array but vectorized over the leading
    axis; used by the solver once the shooting states are propagated.
    """
    k1 = deriv_array(x, u, g)
    x2 = x + 0.5 * dt * k1
    k2 = deriv_array(x2, u, g)
    x3 = x + 0.5 * dt * k2
    x4 = x + dt * deriv_array(x3, u, g)

    J1x, J1u = _deriv_jacobians_batch(x, u)
    J2x, J2u = _deriv_jacobians_batch(x2, u)
    J3x, J3u = _deriv_jacobians_batch(x3, u)
    J4x, J4u = _deriv_jacobians_batch(x4, u)

    eye = _EYE10
    dk1x = J1x
    dk2x = J2x @ (eye + 0.5 * dt * dk1x)
    dk3x = J3x @ (eye + 0.5 * dt * dk2x)
    dk4x = J4x @ (eye + dt * dk3x)

    dk1u = J1u
    dk2u = J2u + 0.5 * dt * (J2x @ dk1u)
    dk3u = J3u + 0.5 * dt * (J3x @ dk2u)
    dk4u = J4u + dt * (J4x @ dk3u)

    A = eye + (dt / 6.0) * (dk1x + 2 * dk2x + 2 * dk3x + dk4x)
    B = (dt / 6.0) * (dk1u + 2 * dk2u + 2 * dk3u + dk4u)
    return A, B
