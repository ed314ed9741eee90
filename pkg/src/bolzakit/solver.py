"""Direct transcription and an augmented-Lagrangian solver.

The problem is discretized on a uniform grid and solved as

    min  J_h(x)   s.t.  w_k(x) := v_k + g(t_k, x_k) in Omega1  (each cell)
                        (x_0, x_N) in Omega2

by an augmented-Lagrangian method with explicit slacks: the inner loop
minimizes the augmented objective in x by gradient descent with Armijo
backtracking, the slacks are updated by exact projection, and the
multipliers by the standard dual ascent step.  Cell multipliers are kept
as densities (the dual pairing is sum_k h <mu_k, w_k>), so mu_k
approximates a multiplier function value rather than an h-scaled impulse.

The descent direction is the gradient in (x(0), velocity) coordinates
weighted by the discrete L2 inner product.  This is still plain gradient
descent, just measured in the geometry natural to the curve space; in raw
node coordinates the conditioning degrades like N^2 with grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import problem as pb
from .convex import project, project_normal_cone
from .funspace import CellPath, Grid, Trajectory, ac_norm


class SolverError(RuntimeError):
    def __init__(self, message: str, snapshot: np.ndarray | None = None):
        super().__init__(message)
        self.snapshot = snapshot


class UnboundedError(SolverError):
    pass


_OBJECTIVE_FLOOR = -1e12
_ARMIJO_C = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    grid_N: int = 200
    penalty_rho: float = 10.0
    penalty_growth: float = 4.0
    outer_iters: int = 60
    inner_tol: float = 1e-7
    inner_max_steps: int = 4000
    feas_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.grid_N < 1 or self.outer_iters < 1 or self.inner_max_steps < 1:
            raise ValueError("iteration counts must be positive")
        if not (self.penalty_rho > 0 and self.penalty_growth >= 1.0):
            raise ValueError("penalty parameters must be positive (growth >= 1)")
        if not self.inner_tol > 0:
            raise ValueError("inner tolerance must be positive")
        if self.feas_tol < 1e-12:
            raise ValueError("feasibility tolerance must be at least 1e-12")


@dataclass
class SolveResult:
    x: Trajectory
    mu: CellPath
    s1: np.ndarray
    s2: np.ndarray
    converged: bool
    objective: float
    stationarity: float
    velocity_defect: float
    endpoint_defect: float
    history: list = field(default_factory=list)


@dataclass
class RestoreResult:
    y: Trajectory
    ac_gap: float
    converged: bool


# ---------------------------------------------------------------------------
# smooth objectives for the ALM core


class _CostObjective:
    """The discrete Bolza cost J_h with its node gradient."""

    def __init__(self, P: pb.ProblemSpec, grid: Grid):
        self.P = P
        self.grid = grid
        self.t = grid.cell_lefts()

    def value(self, X: np.ndarray) -> float:
        P, h = self.P, self.grid.h
        V = np.diff(X, axis=0) / h
        running = float(h * P.theta_cells(self.t, X[:-1], V).sum())
        return P.phi_value(X[0], X[-1]) + running

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        P, h = self.P, self.grid.h
        V = np.diff(X, axis=0) / h
        theta = P.theta_cells(self.t, X[:-1], V)
        theta_x, theta_v = P.theta_grad_cells(self.t, X[:-1], V)
        gx0, gxT = P.phi_gradients(X[0], X[-1])
        value = P.phi_value(X[0], X[-1]) + float(h * theta.sum())
        grad = np.zeros_like(X)
        grad[:-1] += h * theta_x
        grad[:-1] -= theta_v
        grad[1:] += theta_v
        grad[0] += gx0
        grad[-1] += gxT
        return value, grad


class _RestoreObjective:
    """Half squared deviation from a reference curve, measured on the
    initial value and the cell velocities."""

    def __init__(self, x_ref: Trajectory):
        self.grid = x_ref.grid
        self.x0_ref = x_ref.values[0]
        self.v_ref = x_ref.velocities()

    def value(self, X: np.ndarray) -> float:
        h = self.grid.h
        dv = np.diff(X, axis=0) / h - self.v_ref
        d0 = X[0] - self.x0_ref
        return float(0.5 * (d0 @ d0) + 0.5 * h * np.einsum("ki,ki->", dv, dv))

    def value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        h = self.grid.h
        dv = np.diff(X, axis=0) / h - self.v_ref
        d0 = X[0] - self.x0_ref
        value = float(0.5 * (d0 @ d0) + 0.5 * h * np.einsum("ki,ki->", dv, dv))
        grad = np.zeros_like(X)
        grad[:-1] -= dv
        grad[1:] += dv
        grad[0] += d0
        return value, grad


# ---------------------------------------------------------------------------
# ALM core


class _AlmState:
    def __init__(self, P: pb.ProblemSpec, cfg: SolverConfig, grid: Grid,
                 objective, X0: np.ndarray):
        self.P = P
        self.cfg = cfg
        self.grid = grid
        self.objective = objective
        self.X = X0.copy()
        self.mu = np.zeros((grid.N, P.n))
        self.s = np.zeros(2 * P.n)
        self.rho = cfg.penalty_rho
        self.t = grid.cell_lefts()
        self.step = 1.0

    # -- constraint pieces ------------------------------------------------

    def w(self, X: np.ndarray) -> np.ndarray:
        V = np.diff(X, axis=0) / self.grid.h
        return V + self.P.g_cells(self.t, X[:-1])

    def endpoints(self, X: np.ndarray) -> np.ndarray:
        return np.concatenate([X[0], X[-1]])

    def constraint_adjoint(self, X: np.ndarray, MU: np.ndarray,
                           S: np.ndarray) -> np.ndarray:
        """Node gradient of sum_k h <MU_k, w_k(X)> + <S, (x_0, x_N)>."""
        h = self.grid.h
        n = self.P.n
        G = self.P.g_jacobian_cells(self.t, X[:-1])
        out = np.zeros_like(X)
        out[:-1] += h * np.einsum("kij,ki->kj", G, MU) - MU
        out[1:] += MU
        out[0] += S[:n]
        out[-1] += S[n:]
        return out

    # -- augmented objective ----------------------------------------------

    def _penalty_residuals(self, X: np.ndarray):
        W = self.w(X)
        Y = project(self.P.omega1, W + self.mu / self.rho)
        E = self.endpoints(X)
        Z = project(self.P.omega2, E + self.s / self.rho)
        r_cells = W - Y + self.mu / self.rho
        r_end = E - Z + self.s / self.rho
        return r_cells, r_end

    def aug_value(self, X: np.ndarray) -> float:
        base = self.objective.value(X)
        r_cells, r_end = self._penalty_residuals(X)
        h = self.grid.h
        pen = 0.5 * self.rho * (
            h * float(np.einsum("ki,ki->", r_cells, r_cells)) + float(r_end @ r_end)
        )
        return base + pen

    def aug_value_and_grad(self, X: np.ndarray) -> tuple[float, np.ndarray]:
        base, grad = self.objective.value_and_grad(X)
        r_cells, r_end = self._penalty_residuals(X)
        h = self.grid.h
        n = self.P.n
        pen = 0.5 * self.rho * (
            h * float(np.einsum("ki,ki->", r_cells, r_cells)) + float(r_end @ r_end)
        )
        G = self.P.g_jacobian_cells(self.t, X[:-1])
        grad = grad.copy()
        grad[:-1] += self.rho * (h * np.einsum("kij,ki->kj", G, r_cells) - r_cells)
        grad[1:] += self.rho * r_cells
        grad[0] += self.rho * r_end[:n]
        grad[-1] += self.rho * r_end[n:]
        return base + pen, grad

    # -- metric descent ---------------------------------------------------

    def _metric_direction(self, grad: np.ndarray):
        """Descent direction and squared metric norm from a node gradient.

        Coordinates are (x(0), cell velocities); the velocity block is
        weighted by h so the gradient norm is grid-independent.
        """
        h = self.grid.h
        g0 = grad.sum(axis=0)
        # d/dv_j of F = h * sum_{m > j} grad_m
        tail = np.cumsum(grad[::-1], axis=0)[::-1]
        gV = h * tail[1:]
        d0 = -g0
        dV = -gV / h
        norm_sq = float(g0 @ g0) + float(np.einsum("ki,ki->", gV, gV)) / h
        return d0, dV, norm_sq

    def _apply_step(self, X: np.ndarray, d0: np.ndarray, dV: np.ndarray,
                    alpha: float) -> np.ndarray:
        h = self.grid.h
        x0 = X[0] + alpha * d0
        V = np.diff(X, axis=0) / h + alpha * dV
        out = np.empty_like(X)
        out[0] = x0
        out[1:] = x0 + h * np.cumsum(V, axis=0)
        return out

    def stationarity(self, X: np.ndarray) -> float:
        """Metric norm of the plain-Lagrangian gradient at (X, mu, s)."""
        _, grad = self.objective.value_and_grad(X)
        grad = grad + self.constraint_adjoint(X, self.mu, self.s)
        _, _, norm_sq = self._metric_direction(grad)
        return float(np.sqrt(norm_sq))

    def inner_minimize(self):
        cfg = self.cfg
        X = self.X
        try:
            F, grad = self.aug_value_and_grad(X)
        except pb.ex.ExprDomainError as err:
            raise SolverError(
                f"expression domain error at the current iterate: {err}",
                snapshot=X.copy(),
            ) from err
        eps = float(np.finfo(float).eps)
        for _ in range(cfg.inner_max_steps):
            if F <= _OBJECTIVE_FLOOR:
                raise UnboundedError(
                    "unbounded below at this discretization", snapshot=X.copy()
                )
            d0, dV, norm_sq = self._metric_direction(grad)
            if np.sqrt(norm_sq) <= cfg.inner_tol:
                break
            # below this scale an Armijo decrease is not representable in
            # doubles; accepting such steps would poison the step carryover
            plateau = 16.0 * eps * (1.0 + abs(F))
            alpha = min(max(self.step * 2.0, 1e-16), 1e8)
            trial = None
            accepted = False
            while alpha * norm_sq > plateau:
                trial = self._apply_step(X, d0, dV, alpha)
                try:
                    F_trial = self.aug_value(trial)
                except pb.ex.ExprDomainError as err:
                    raise SolverError(
                        f"expression domain error during line search: {err}",
                        snapshot=trial.copy(),
                    ) from err
                if F_trial <= F - _ARMIJO_C * alpha * norm_sq:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                X = trial
                self.step = alpha
                F, grad = self.aug_value_and_grad(X)
                continue
            # objective differences are below float resolution; continue
            # while the curvature-adapted step still shrinks the gradient
            advanced = False
            alpha = self.step
            for _ in range(8):
                trial = self._apply_step(X, d0, dV, alpha)
                try:
                    F_t, grad_t = self.aug_value_and_grad(trial)
                except pb.ex.ExprDomainError as err:
                    raise SolverError(
                        f"expression domain error during line search: {err}",
                        snapshot=trial.copy(),
                    ) from err
                _, _, ns_t = self._metric_direction(grad_t)
                if ns_t <= 0.995 * norm_sq:
                    X, F, grad = trial, F_t, grad_t
                    advanced = True
                    break
                alpha *= 0.5
            if not advanced:
                break  # true stationarity floor for this arithmetic
        self.X = X

    def update_duals(self):
        W = self.w(self.X)
        Y = project(self.P.omega1, W + self.mu / self.rho)
        self.mu = self.mu + self.rho * (W - Y)
        E = self.endpoints(self.X)
        Z = project(self.P.omega2, E + self.s / self.rho)
        self.s = self.s + self.rho * (E - Z)

    def initialize_endpoint_duals(self):
        """Least-squares endpoint multipliers, projected onto the normal
        cone at the projected endpoint pair.

        At a stationary warm start with inactive cell constraints this
        makes the Lagrangian gradient vanish immediately, so a solve
        started at an optimum converges in one outer iteration.
        """
        _, grad = self.objective.value_and_grad(self.X)
        grad = grad + self.constraint_adjoint(
            self.X, self.mu, np.zeros(2 * self.P.n)
        )
        xi = -np.concatenate([grad[0], grad[-1]])
        anchor = project(self.P.omega2, self.endpoints(self.X))
        self.s = project_normal_cone(self.P.omega2, anchor, xi)


def _default_init(P: pb.ProblemSpec, grid: Grid) -> np.ndarray:
    """Straight line between the halves of the projected zero endpoint pair."""
    z0 = project(P.omega2, np.zeros(2 * P.n))
    a, b = z0[: P.n], z0[P.n :]
    lam = (grid.nodes() / grid.T)[:, None]
    return (1.0 - lam) * a + lam * b


def _run_alm(P: pb.ProblemSpec, cfg: SolverConfig, grid: Grid, objective,
             X0: np.ndarray):
    state = _AlmState(P, cfg, grid, objective, X0)
    history = []
    converged = False
    prev_feas = np.inf
    try:
        state.initialize_endpoint_duals()
        for outer in range(1, cfg.outer_iters + 1):
            x_traj = Trajectory(grid, state.X)
            vdef, edef = pb.feasibility_residual(P, x_traj)
            feas = vdef + edef
            stat = state.stationarity(state.X)
            history.append(
                {
                    "outer_iter": outer,
                    "objective": objective.value(state.X),
                    "velocity_defect": vdef,
                    "endpoint_defect": edef,
                    "rho": state.rho,
                }
            )
            if feas <= cfg.feas_tol and stat <= cfg.inner_tol:
                converged = True
                break
            state.inner_minimize()
            state.update_duals()
            x_traj = Trajectory(grid, state.X)
            vdef2, edef2 = pb.feasibility_residual(P, x_traj)
            feas_new = vdef2 + edef2
            # grow the penalty only while infeasibility is both above target
            # and not halving; growing past that wrecks inner conditioning
            if feas_new > cfg.feas_tol and feas_new > 0.5 * prev_feas:
                state.rho *= cfg.penalty_growth
            prev_feas = feas_new
    except pb.ex.ExprDomainError as err:
        raise SolverError(
            f"expression domain error at the current iterate: {err}",
            snapshot=state.X.copy(),
        ) from err
    x_final = Trajectory(grid, state.X)
    vdef, edef = pb.feasibility_residual(P, x_final)
    return state, history, converged, vdef, edef


def solve(
    P: pb.ProblemSpec, cfg: SolverConfig, warm_start: Trajectory | None = None
) -> SolveResult:
    """Solve the discretized problem; returns the primal trajectory, the
    multiplier density for the velocity constraint, and the endpoint
    multipliers.

    With nonconvex data the result is a first-order point; the necessary
    conditions certified downstream do not distinguish local optimality.
    """
    grid = Grid(P.T, cfg.grid_N)
    if warm_start is not None:
        if warm_start.n != P.n or not warm_start.grid.compatible(grid):
            raise SolverError("warm start must live on the configured grid")
        X0 = warm_start.values.copy()
    else:
        X0 = _default_init(P, grid)
    objective = _CostObjective(P, grid)
    state, history, converged, vdef, edef = _run_alm(P, cfg, grid, objective, X0)
    x = Trajectory(grid, state.X)
    n = P.n
    return SolveResult(
        x=x,
        mu=CellPath(grid, state.mu),
        s1=state.s[:n].copy(),
        s2=state.s[n:].copy(),
        converged=converged,
        objective=pb.evaluate_cost(P, x),
        stationarity=state.stationarity(state.X),
        velocity_defect=vdef,
        endpoint_defect=edef,
        history=history,
    )


def restore_feasibility(
    P: pb.ProblemSpec, x: Trajectory, cfg: SolverConfig
) -> RestoreResult:
    """Project x toward the feasible set: minimize half the squared
    deviation (initial value and velocities) over feasible curves and
    report the ac-norm gap, an upper bound for the ac-distance of x from
    the feasible set at this discretization.

    A nonconverged restoration still returns its best curve, with
    converged=False marking the bound unverified.
    """
    pb._check_grid(P, x)
    grid = x.grid
    objective = _RestoreObjective(x)
    state, _, converged, _, _ = _run_alm(P, cfg, grid, objective, x.values.copy())
    y = Trajectory(grid, state.X)
    return RestoreResult(y=y, ac_gap=ac_norm(y - x), converged=converged)
