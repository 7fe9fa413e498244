"""Gauss-Newton SQP over the multiple-shooting horizon, condensed to a dense
box-constrained QP and executed one iteration per control loop.

Each call re-propagates the state guess from the latest estimate (closing the
shooting gaps), assembles the weighted residual stack and its Jacobian with
respect to the stacked input corrections, and solves

    min ½ duᵀ H du + gᵀ du    s.t.  lb <= du <= ub

with a primal active-set method whose Cholesky factor of the free block is
updated incrementally as bounds are added and released.  A full step (no line
search) is taken, mirroring real-time-iteration practice: the warm-started
problem stays close to its own linearization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import ocp as ocp_mod
from .dynamics import QuadInput, QuadState, U_DIM, X_DIM, rk4_array, rk4_jacobians_batch
from .geometry import Array
from .ocp import LinearizationFailure, OcpConfig, Reference

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
DEGENERATE = "degenerate"
LINEARIZATION_FAILED = "linearization_failed"

#: finite-difference step for perception residual Jacobians
_FD_STEP = 1e-6


@dataclass
class QpSolution:
    du: Array
    active_set: Array  # per-variable flag: -1 lower bound, 0 free, +1 upper bound
    iterations: int
    status: str


@dataclass
class CondensedQp:
    """Dense box QP over stacked input corrections (M = 4 (N-1) variables)."""

    H: Array
    g: Array
    lb: Array
    ub: Array
    levenberg: float = 0.0

    def stationarity(self, du: Array | None = None) -> float:
        """Infinity norm of the projected gradient (0 at a KKT point)."""
        x = np.zeros_like(self.g) if du is None else du
        grad = self.H @ x + self.g
        return float(np.max(np.abs(x - np.clip(x - grad, self.lb, self.ub))))


@dataclass
class StepDiagnostics:
    solve_time_us: float
    qp_iterations: int
    kkt_residual: float
    status: str


@dataclass
class SolverState:
    """Warm-started guess trajectory plus last-step bookkeeping."""

    X: Array
    U: Array
    last_status: str = OPTIMAL
    last_kkt_residual: float = np.inf
    last_u_apply: Array = field(default_factory=lambda: np.array([9.81, 0.0, 0.0, 0.0]))

    @classmethod
    def init_hover(cls, x_est: QuadState, config: OcpConfig) -> "SolverState":
        hover = np.array([config.params.g, 0.0, 0.0, 0.0])
        return cls(
            X=np.tile(x_est.as_array(), (config.N, 1)),
            U=np.tile(hover, (config.N - 1, 1)),
            last_u_apply=hover.copy(),
        )


class _NotPositiveDefinite(Exception):
    pass


class _CholFactor:
    """Cholesky factor of H[F, F] maintained under append/remove of free variables."""

    def __init__(self, H: Array, free: list[int]):
        self.H = H
        self.free = list(free)
        k = len(self.free)
        self.L = np.zeros((H.shape[0], H.shape[0]))
        if k:
            sub = H[np.ix_(self.free, self.free)]
            try:
                self.L[:k, :k] = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError as exc:
                raise _NotPositiveDefinite from exc
        self.k = k

    def solve(self, rhs: Array) -> Array:
        k = self.k
        y = solve_triangular(self.L[:k, :k], rhs, lower=True, check_finite=False)
        return solve_triangular(self.L[:k, :k].T, y, lower=False, check_finite=False)

    def append(self, j: int) -> None:
        """Grow the free set by variable j (added at the end of the ordering)."""
        k = self.k
        c = self.H[np.asarray(self.free, dtype=int), j] if k else np.empty(0)
        d = self.H[j, j]
        if k:
            w = solve_triangular(self.L[:k, :k], c, lower=True, check_finite=False)
        else:
            w = np.empty(0)
        rest = d - w @ w
        if rest <= 0.0:
            raise _NotPositiveDefinite
        self.L[k, :k] = w
        self.L[k, k] = np.sqrt(rest)
        self.free.append(j)
        self.k = k + 1

    def remove(self, pos: int) -> None:
        """Drop the variable at position `pos` of the ordering (Givens re-triangularization)."""
        k = self.k
        # delete row pos; rows below keep an extra column that Givens rotations clear
        M = self.L[:k, :k]
        M = np.delete(M, pos, axis=0)
        for j in range(pos, k - 1):
            a, b = M[j, j], M[j, j + 1]
            r = np.hypot(a, b)
            if r == 0.0:
                raise _NotPositiveDefinite
            c, s = a / r, b / r
            col_a = M[j:, j].copy()
            col_b = M[j:, j + 1].copy()
            M[j:, j] = c * col_a + s * col_b
            M[j:, j + 1] = -s * col_a + c * col_b
        self.L[: k - 1, : k - 1] = M[:, : k - 1]
        self.free.pop(pos)
        self.k = k - 1


def solve_qp(qp: CondensedQp, max_iter: int = 500) -> QpSolution:
    """Primal active-set method for the box QP; deterministic pivoting."""
    H, g, lb, ub = qp.H, qp.g, qp.lb, qp.ub
    m = g.shape[0]
    x = np.clip(np.zeros(m), lb, ub)
    active = np.zeros(m, dtype=np.int8)
    free = list(range(m))
    try:
        chol = _CholFactor(H, free)
    except _NotPositiveDefinite:
        return QpSolution(du=x, active_set=active, iterations=0, status=DEGENERATE)

    status = MAX_ITER
    iters = 0
    banned = np.zeros(m, dtype=bool)  # weakly-active bounds that re-block on release
    last_released = -1
    while iters < max_iter:
        iters += 1
        grad = H @ x + g
        # the projected gradient is the complete first-order KKT residual for a
        # box problem; the tolerance scales with the gradient so ill-conditioned
        # instances terminate at their attainable accuracy
        pg = float(np.max(np.abs(x - np.clip(x - grad, lb, ub))))
        if pg <= 1e-10 * max(1.0, float(np.max(np.abs(grad)))):
            status = OPTIMAL
            break
        d = np.zeros(m)
        if chol.k:
            idx = np.asarray(chol.free, dtype=int)
            d[idx] = -chol.solve(grad[idx])

        if np.max(np.abs(d)) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
            # free subspace stationary but KKT dirty: a bound multiplier has
            # the wrong sign, release the worst offender
            lam = np.where(active == -1, grad, np.where(active == 1, -grad, np.inf))
            lam[banned] = np.inf
            j = int(np.argmin(lam))  # argmin takes the first (smallest index) tie
            if lam[j] >= -1e-10:
                status = OPTIMAL
                break
            active[j] = 0
            last_released = j
            try:
                chol.append(j)
            except _NotPositiveDefinite:
                status = DEGENERATE
                break
            continue

        # ratio test toward the free-subspace minimizer
        ratios = np.full(m, np.inf)
        up = d > 1e-15
        dn = d < -1e-15
        ratios[up] = (ub[up] - x[up]) / d[up]
        ratios[dn] = (lb[dn] - x[dn]) / d[dn]
        alpha = float(np.min(ratios))
        if alpha >= 1.0:
            x = x + d
            continue
        blockers = np.flatnonzero(ratios <= alpha + 1e-12)
        j = int(blockers[0])  # smallest index among ties
        if j == last_released and alpha <= 1e-12:
            # releasing this bound made no progress: keep it fixed from now on
            banned[j] = True
        last_released = -1
        alpha = max(alpha, 0.0)
        x = np.clip(x + alpha * d, lb, ub)
        side = 1 if d[j] > 0 else -1
        x[j] = ub[j] if side == 1 else lb[j]
        active[j] = side
        chol.remove(chol.free.index(j))

    # report activity by the solution's position, not the pivot bookkeeping
    # (a step can land several variables exactly on their bounds at once)
    span = np.maximum(1.0, np.abs(ub) + np.abs(lb))
    at_up = np.abs(x - ub) <= 1e-12 * span
    at_lo = np.abs(x - lb) <= 1e-12 * span
    active_out = np.where(at_up, 1, np.where(at_lo, -1, 0)).astype(np.int8)
    return QpSolution(du=x, active_set=active_out, iterations=iters, status=status)


def _perception_jacobians(
    X: Array, U: Array, config: OcpConfig, landmark: Array
) -> tuple[Array, Array, Array]:
    """Central-difference Jacobians of the guarded perception residual.

    Returns (z0 (n,4), Jx (n,4,10), Ju (n,4,4)) for the n = N-1 stage points,
    batched into a single vectorized evaluation.
    """
    n = U.shape[0]
    h = _FD_STEP
    n_dim = X_DIM + U_DIM

    Xp = np.broadcast_to(X[:n, None, :], (n, n_dim, X_DIM)).copy()
    Up = np.broadcast_to(U[:, None, :], (n, n_dim, U_DIM)).copy()
    Xm = Xp.copy()
    Um = Up.copy()
    for d in range(X_DIM):
        Xp[:, d, d] += h
        Xm[:, d, d] -= h
    for d in range(U_DIM):
        Up[:, X_DIM + d, d] += h
        Um[:, X_DIM + d, d] -= h

    z0, _ = ocp_mod.guarded_perception(X[:n], U, config, landmark)
    zp, _ = ocp_mod.guarded_perception(Xp, Up, config, landmark)
    zm, _ = ocp_mod.guarded_perception(Xm, Um, config, landmark)
    J = (zp - zm) / (2.0 * h)  # (n, 14, 4)
    J = np.swapaxes(J, 1, 2)  # (n, 4, 14)
    return z0, J[:, :, :X_DIM], J[:, :, X_DIM:]


def linearize_and_condense(
    solver_state: SolverState,
    x_est: QuadState,
    config: OcpConfig,
    reference: Reference,
    landmark: Array | None,
) -> CondensedQp:
    """One Gauss-Newton linearization, fully condensed onto the input corrections.

    Closes the shooting gaps by re-propagating the state guess from the
    estimate along the current input guess (updating solver_state.X), chains
    the state sensitivities E_i = dx_i/d(du stack), and stacks the weighted
    residual Jacobians into H = 2 JᵀJ + levenberg*I, g = 2 Jᵀr.
    """
    N, dt = config.N, config.dt
    n_in = N - 1
    m = U_DIM * n_in
    w = config.weights
    U = solver_state.U
    g_grav = config.params.g

    X = solver_state.X
    X[0] = x_est.as_array()
    for i in range(n_in):
        X[i + 1] = rk4_array(X[i], U[i], dt, g_grav)
    A, B = rk4_jacobians_batch(X[:n_in], U, dt, g_grav)

    use_perception = landmark is not None and np.any(w.Qp != 0.0)
    if use_perception:
        z0, Jz_x, Jz_u = _perception_jacobians(X, U, config, landmark)
        if not (np.all(np.isfinite(z0)) and np.all(np.isfinite(Jz_x)) and np.all(np.isfinite(Jz_u))):
            raise LinearizationFailure("perception residual is non-finite")

    # fixed row layout: per stage [state(10) + vel(3) if i>0] + input(4) +
    # perception(4), then terminal state(10) + vel(3)
    per_rows = 4 if use_perception else 0
    stage_rows = 10 + 3 + U_DIM + per_rows
    n_rows = (U_DIM + per_rows) + (n_in - 1) * stage_rows + 13
    J = np.zeros((n_rows, m))
    r = np.zeros(n_rows)
    E = np.zeros((X_DIM, m))
    vmax = config.bounds.v_max
    row = 0

    for i in range(n_in):
        sl = slice(U_DIM * i, U_DIM * (i + 1))
        if i > 0:
            # stage-state residual (stage 0 is pinned to the estimate)
            xi = ocp_mod.state_residual(X[i], reference.X[i])
            Jxi = ocp_mod.state_residual_jacobian(X[i], reference.X[i])
            J[row : row + 10] = (w.sqrt_Qx_stage @ Jxi) @ E
            r[row : row + 10] = w.sqrt_Qx_stage @ xi
            row += 10
            # soft velocity box (rows identically zero while inactive)
            if np.any(np.abs(X[i, 3:6]) > vmax):
                Jv = ocp_mod.velocity_penalty_jacobian(X[i, 3:6], config.bounds)
                J[row : row + 3] = Jv @ E[3:6]
                r[row : row + 3] = ocp_mod.velocity_penalty_residual(X[i, 3:6], config.bounds)
            row += 3
        # input residual
        J[row : row + U_DIM, sl] = w.sqrt_R
        r[row : row + U_DIM] = w.sqrt_R @ (U[i] - reference.U[i])
        row += U_DIM
        # perception residual
        if use_perception:
            Jp = w.sqrt_Qp @ Jz_x[i]
            J[row : row + 4] = Jp @ E
            J[row : row + 4, sl] += w.sqrt_Qp @ Jz_u[i]
            r[row : row + 4] = w.sqrt_Qp @ z0[i]
            row += 4
        # propagate the sensitivity to the next node
        E = A[i] @ E
        E[:, sl] += B[i]

    xi = ocp_mod.state_residual(X[N - 1], reference.X[N - 1])
    Jxi = ocp_mod.state_residual_jacobian(X[N - 1], reference.X[N - 1])
    J[row : row + 10] = (w.sqrt_Qx_terminal @ Jxi) @ E
    r[row : row + 10] = w.sqrt_Qx_terminal @ xi
    row += 10
    if np.any(np.abs(X[N - 1, 3:6]) > vmax):
        Jv = ocp_mod.velocity_penalty_jacobian(X[N - 1, 3:6], config.bounds)
        J[row : row + 3] = Jv @ E[3:6]
        r[row : row + 3] = ocp_mod.velocity_penalty_residual(X[N - 1, 3:6], config.bounds)
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(r))):
        raise LinearizationFailure("residual stack is non-finite")

    H = 2.0 * (J.T @ J)
    g = 2.0 * (J.T @ r)

    lam = 1e-6
    eye = np.eye(m)
    while True:
        try:
            np.linalg.cholesky(H + lam * eye)
            break
        except np.linalg.LinAlgError:
            lam *= 2.0
            if lam > 1e12:
                raise LinearizationFailure("Hessian cannot be regularized")

    lower = np.tile(config.bounds.input_lower(), n_in) - U.ravel()
    upper = np.tile(config.bounds.input_upper(), n_in) - U.ravel()
    return CondensedQp(H=H + lam * eye, g=g, lb=lower, ub=upper, levenberg=lam)


def rti_step(
    solver_state: SolverState,
    x_est: QuadState,
    config: OcpConfig,
    reference: Reference,
    landmark: Array | None,
) -> tuple[QuadInput, Array, StepDiagnostics]:
    """One real-time iteration: linearize, solve the condensed QP, take the
    full step, and return the first input (clamped) plus the predicted
    open-loop trajectory.  Fail-operational: on solver failure the previous
    applied input is returned with a status flag."""
    t0 = time.perf_counter()
    lower = config.bounds.input_lower()
    upper = config.bounds.input_upper()

    try:
        qp = linearize_and_condense(solver_state, x_est, config, reference, landmark)
        kkt = qp.stationarity()
        sol = solve_qp(qp)
    except (LinearizationFailure, FloatingPointError):
        elapsed = (time.perf_counter() - t0) * 1e6
        solver_state.last_status = LINEARIZATION_FAILED
        diag = StepDiagnostics(elapsed, 0, np.inf, LINEARIZATION_FAILED)
        return QuadInput.from_array(solver_state.last_u_apply), solver_state.X.copy(), diag

    if sol.status == DEGENERATE:
        elapsed = (time.perf_counter() - t0) * 1e6
        solver_state.last_status = DEGENERATE
        diag = StepDiagnostics(elapsed, sol.iterations, kkt, DEGENERATE)
        return QuadInput.from_array(solver_state.last_u_apply), solver_state.X.copy(), diag

    solver_state.U = solver_state.U + sol.du.reshape(config.N - 1, U_DIM)
    np.clip(solver_state.U, lower, upper, out=solver_state.U)
    X = solver_state.X
    for i in range(config.N - 1):
        X[i + 1] = rk4_array(X[i], solver_state.U[i], config.dt, config.params.g)

    u0 = np.clip(solver_state.U[0], lower, upper)
    solver_state.last_u_apply = u0.copy()
    solver_state.last_kkt_residual = kkt
    solver_state.last_status = sol.status
    elapsed = (time.perf_counter() - t0) * 1e6
    diag = StepDiagnostics(elapsed, sol.iterations, kkt, sol.status)
    return QuadInput.from_array(u0), X.copy(), diag


def shift_warm_start(solver_state: SolverState) -> SolverState:
    """Shift the guess one stage forward, duplicating the last stage."""
    solver_state.X[:-1] = solver_state.X[1:]
    solver_state.U[:-1] = solver_state.U[1:]
    return solver_state
