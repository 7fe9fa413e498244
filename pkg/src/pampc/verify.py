"""Embedded oracle suites: independent checks of the analytic Jacobians, the
projection-velocity algebra, and the QP solver, runnable from the CLI as a
release gate.

Each suite re-derives its expected values by a method independent of the code
path under test (finite differences, algebraic identity, projected gradient).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dynamics as dyn
from . import geometry as geo
from . import perception as per
from .solver import CondensedQp, solve_qp


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""


def _random_state_input(rng):
    x = np.concatenate(
        [
            rng.uniform(-2, 2, size=3),
            rng.uniform(-3, 3, size=3),
            geo.quat_normalize(rng.normal(size=4)),
        ]
    )
    u = np.concatenate([[rng.uniform(2, 18)], rng.uniform(-2, 2, size=3)])
    return x, u


def _landmark_in_front(rng, x, extr):
    p_c = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.3, 5.0)])
    q_wc = geo.quat_mul(x[6:10], extr.q_BC)
    origin = x[0:3] + geo.quat_rotate(x[6:10], extr.t_BC)
    return origin + geo.quat_rotate(q_wc, p_c)


def check_rk4_jacobians(samples: int = 500, seed: int = 0, corrupt: bool = False) -> SuiteResult:
    """rk4_step_with_jacobians versus central finite differences of the raw map."""
    rng = np.random.default_rng(seed)
    dt, h = 0.1, 1e-6
    worst = 0.0

    def raw_step(x, u):
        k1 = dyn.deriv_array(x, u)
        k2 = dyn.deriv_array(x + 0.5 * dt * k1, u)
        k3 = dyn.deriv_array(x + 0.5 * dt * k2, u)
        k4 = dyn.deriv_array(x + dt * k3, u)
        return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    for _ in range(samples):
        x, u = _random_state_input(rng)
        _, A, B = dyn.rk4_jacobians_array(x.copy(), u, dt)
        if corrupt:
            A = A + 1e-3
        for j in range(10):
            e = np.zeros(10)
            e[j] = h
            fd = (raw_step(x + e, u) - raw_step(x - e, u)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(A[:, j] - fd) / (1.0 + np.abs(fd)))))
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            fd = (raw_step(x, u + e) - raw_step(x, u - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(B[:, j] - fd) / (1.0 + np.abs(fd)))))
    tol = 1e-5
    return SuiteResult(
        name="rk4_step_with_jacobians vs finite differences",
        passed=worst < tol,
        max_error=worst,
        tolerance=tol,
    )


def check_projection_velocity(samples: int = 500, seed: int = 1, corrupt: bool = False) -> SuiteResult:
    """Quotient-rule and cross-product image-velocity forms, plus a
    finite-difference check of the full perception chain along the flow."""
    rng = np.random.default_rng(seed)
    intr = per.CameraIntrinsics()
    extr = per.default_extrinsics()
    worst_eq = 0.0
    worst_fd = 0.0
    h = 1e-6
    for _ in range(samples):
        p_c = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 5)])
        p_c_dot = rng.uniform(-3, 3, size=3)
        a = np.array(per.projection_velocity(p_c, p_c_dot, intr))
        b = np.array(per.projection_velocity_compact(p_c, p_c_dot, intr))
        worst_eq = max(worst_eq, float(np.max(np.abs(a - b))))

        x, u = _random_state_input(rng)
        p_w = _landmark_in_front(rng, x, extr)
        z, _ = per.perception_vec_array(x, u, extr.t_BC, extr.q_BC, intr.fx, intr.fy, p_w)
        if corrupt:
            z = z + np.array([0.0, 0.0, 1.0, 1.0])
        f = dyn.deriv_array(x, u)
        zp, _ = per.perception_vec_array(x + h * f, u, extr.t_BC, extr.q_BC, intr.fx, intr.fy, p_w)
        zm, _ = per.perception_vec_array(x - h * f, u, extr.t_BC, extr.q_BC, intr.fx, intr.fy, p_w)
        fd = (zp[:2] - zm[:2]) / (2 * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(z[2:4] - fd) / (1.0 + np.abs(fd)))))
    passed = worst_eq < 1e-10 and worst_fd < 1e-4
    return SuiteResult(
        name="projection velocity equivalence and flow oracle",
        passed=passed,
        max_error=worst_fd,
        tolerance=1e-4,
        detail=f"form-equivalence max {worst_eq:.3e} (tol 1e-10), flow-FD max {worst_fd:.3e}",
    )


def projected_gradient_qp(H, g, lb, ub, tol: float = 1e-10, max_iter: int = 200_000):
    """Accelerated projected gradient on the box QP, an independent reference
    for the active-set solver; terminates on the projected-gradient norm."""
    lam_max = float(np.max(np.linalg.eigvalsh(H)))
    step = 1.0 / lam_max
    x = np.clip(np.zeros_like(g), lb, ub)
    y = x.copy()
    t = 1.0
    f_prev = np.inf
    for _ in range(max_iter):
        grad_y = H @ y + g
        x_new = np.clip(y - step * grad_y, lb, ub)
        if np.max(np.abs(x_new - np.clip(x_new - (H @ x_new + g), lb, ub))) <= tol:
            return x_new
        f_new = 0.5 * x_new @ H @ x_new + g @ x_new
        if f_new > f_prev:  # monotone restart
            y = x.copy()
            t = 1.0
            f_prev = np.inf
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t, f_prev = x_new, t_new, f_new
    return x


def random_box_qp(rng, n: int):
    """Random PD box QP with moderate conditioning and mixed active bounds."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    d = np.exp(rng.uniform(np.log(0.5), np.log(50.0), size=n))
    H = q @ np.diag(d) @ q.T
    H = 0.5 * (H + H.T)
    g = rng.normal(scale=3.0, size=n)
    lb = -np.abs(rng.normal(scale=1.0, size=n)) - 0.01
    ub = np.abs(rng.normal(scale=1.0, size=n)) + 0.01
    return CondensedQp(H=H, g=g, lb=lb, ub=ub)


def check_qp_solver(samples: int = 1000, seed: int = 2, corrupt: bool = False) -> SuiteResult:
    """Active-set solutions versus the projected-gradient oracle."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        n = int(rng.integers(6, 81))
        qp = random_box_qp(rng, n)
        sol = solve_qp(qp)
        du = sol.du + 1e-4 if corrupt else sol.du
        x_ref = projected_gradient_qp(qp.H, qp.g, qp.lb, qp.ub)

        def f(v):
            return 0.5 * v @ qp.H @ v + qp.g @ v

        worst = max(worst, abs(float(f(du) - f(x_ref))))
    tol = 1e-8
    return SuiteResult(
        name="solve_qp vs projected-gradient oracle",
        passed=worst < tol,
        max_error=worst,
        tolerance=tol,
    )


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "rk4_step_with_jacobians": check_rk4_jacobians,
    "projection_velocity": check_projection_velocity,
    "solve_qp": check_qp_solver,
}


def run_all(corrupt: str | None = None, fast: bool = False) -> list[SuiteResult]:
    """Run every oracle suite; `corrupt` names one operation to deliberately
    break (negative-control hook used by the tests)."""
    samples = {"rk4_step_with_jacobians": 100 if fast else 500,
               "projection_velocity": 100 if fast else 500,
               "solve_qp": 100 if fast else 1000}
    results = []
    for name, suite in SUITES.items():
        results.append(suite(samples=samples[name], corrupt=(corrupt == name)))
    return results
