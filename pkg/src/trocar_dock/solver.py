"""Per-cycle nonlinear program solver.

The docking objective is a sum of squared residual terms plus one smoothed
norm term, minimized each control cycle inside a box that encodes joint
position and velocity limits. The solver is Gauss-Newton SQP: at each
iterate it assembles the damped normal-equations model from the stacked
residual Jacobian, solves a box-constrained QP for the step by projected
Newton, and globalizes with a backtracking Armijo line search on the true
objective. Warm-started at the previous configuration, it converges in a
handful of iterations in closed-loop use.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kinematics import JointLimits, KinematicChain
from .task_model import TaskParams, gauss_newton_residuals, objective_value

_ARMIJO_C = 1e-4
_BACKTRACK = 0.5
_MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class BoxBounds:
    """Elementwise feasible interval for one solve."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("bound vectors must share one length")
        if not np.all(lo <= hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        lo.flags.writeable = False
        hi.flags.writeable = False

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 50
    step_tolerance: float = 1e-8
    gauss_newton_damping: float = 1e-9
    qp_max_iterations: int = 200
    gradient_tolerance: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_tolerance <= 0 or self.gradient_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.gauss_newton_damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.qp_max_iterations < 1:
            raise ValueError("qp_max_iterations must be >= 1")


@dataclass(frozen=True)
class SolveOutcome:
    q_star: np.ndarray
    iterations: int
    converged: bool
    final_total_cost: float
    solve_time: float
    cost_history: tuple[float, ...] = field(default=(), repr=False)


def step_bounds(limits: JointLimits, q_prev, dt: float) -> BoxBounds:
    """Feasible box for one cycle: position limits intersected with the
    velocity-limit reach around the previous configuration."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q_prev, dtype=float).reshape(-1)
    if np.any(q < limits.q_min) or np.any(q > limits.q_max):
        warnings.warn(
            "previous configuration outside position limits; clamping",
            RuntimeWarning,
            stacklevel=2,
        )
        q = np.clip(q, limits.q_min, limits.q_max)
    reach = dt * limits.qdot_max
    return BoxBounds(np.maximum(limits.q_min, q - reach), np.minimum(limits.q_max, q + reach))


def _projected_gradient(x, grad, bounds: BoxBounds) -> np.ndarray:
    """First-order stationarity residual x - clip(x - grad)."""
    return x - bounds.clip(x - grad)


def solve_box_qp(
    H: np.ndarray,
    g: np.ndarray,
    bounds: BoxBounds,
    start,
    max_iterations: int = 200,
    tol: float = 1e-9,
) -> np.ndarray:
    """Minimize 0.5 x'Hx + g'x over a box by projected Newton.

    H is symmetrized on entry and must be positive semidefinite; the free
    subset of coordinates takes Newton steps while bound-blocked coordinates
    are frozen, with a projected Armijo backtracking search on the quadratic.
    Terminates when the projected-gradient norm falls below `tol`.
    """
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    g = np.asarray(g, dtype=float).reshape(-1)
    n = g.size
    scale = max(1.0, float(np.abs(H).max()))
    if np.linalg.eigvalsh(H)[0] < -1e-10 * scale:
        raise ValueError("subproblem not convex")
    x = bounds.clip(np.asarray(start, dtype=float).reshape(-1))

    def quad(z):
        return 0.5 * float(z @ H @ z) + float(g @ z)

    span = np.maximum(bounds.upper - bounds.lower, 1.0)
    eps_act = 1e-12 * span
    for _ in range(max_iterations):
        grad = H @ x + g
        pg = _projected_gradient(x, grad, bounds)
        if np.max(np.abs(pg)) <= tol:
            return x
        blocked = ((x - bounds.lower <= eps_act) & (grad > 0)) | (
            (bounds.upper - x <= eps_act) & (grad < 0)
        )
        free = ~blocked
        d = np.zeros(n)
        if free.any():
            h_ff = H[np.ix_(free, free)]
            try:
                d[free] = -np.linalg.solve(h_ff, grad[free])
            except np.linalg.LinAlgError:
                d[free] = -grad[free]
            if float(d @ grad) >= 0.0:  # singular H_ff may yield non-descent
                d = -pg
        else:
            d = -pg
        f0 = quad(x)
        alpha = 1.0
        x_new = x
        for _ in range(_MAX_BACKTRACKS):
            cand = bounds.clip(x + alpha * d)
            if quad(cand) <= f0 + _ARMIJO_C * float(grad @ (cand - x)):
                x_new = cand
                break
            alpha *= _BACKTRACK
        if np.array_equal(x_new, x):
            break
        x = x_new
    return x


def solve(
    chain: KinematicChain,
    params: TaskParams,
    bounds: BoxBounds,
    settings: SolverSettings = SolverSettings(),
) -> SolveOutcome:
    """Gauss-Newton SQP over the cycle box, warm-started at q_prev.

    Each iteration builds H = 2 J'J + damping*I and the exact objective
    gradient from the stacked residuals, solves the box QP for the step,
    and backtracks on the true objective. Falls back to a projected-gradient
    step if the subproblem returns a zero step at a non-stationary point.
    The returned configuration is always inside the bounds.
    """
    t0 = time.perf_counter()
    q = bounds.clip(np.asarray(params.q_prev, dtype=float).reshape(-1))
    n = q.size
    rho, jac = gauss_newton_residuals(q, params, chain)
    cost = float(rho @ rho)
    if not np.isfinite(cost):
        raise ValueError("invalid initial state")
    history = [cost]
    converged = False
    iterations = 0
    lam = settings.gauss_newton_damping
    for k in range(1, settings.max_iterations + 1):
        iterations = k
        grad = 2.0 * (jac.T @ rho)
        pg = _projected_gradient(q, grad, bounds)
        if np.linalg.norm(pg) <= settings.gradient_tolerance * max(1.0, cost):
            converged = True
            break
        H = 2.0 * (jac.T @ jac) + lam * np.eye(n)
        shifted = BoxBounds(bounds.lower - q, bounds.upper - q)
        step = solve_box_qp(
            H, grad, shifted, np.zeros(n), max_iterations=settings.qp_max_iterations
        )
        if np.linalg.norm(step) <= 1e-15 and np.linalg.norm(pg) > settings.gradient_tolerance:
            step = -pg  # degenerate subproblem; retreat to projected gradient
        slope = float(grad @ step)
        if slope >= 0.0:
            break
        alpha = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            q_trial = bounds.clip(q + alpha * step)
            cost_trial = objective_value(q_trial, params, chain)
            if cost_trial <= cost + _ARMIJO_C * alpha * slope:
                accepted = True
                break
            alpha *= _BACKTRACK
        if not accepted:
            break
        moved = np.linalg.norm(q_trial - q)
        q = q_trial
        rho, jac = gauss_newton_residuals(q, params, chain)
        cost = float(rho @ rho)
        history.append(cost)
        if moved < settings.step_tolerance:
            converged = True
            break
    return SolveOutcome(
        q_star=bounds.clip(q),
        iterations=iterations,
        converged=converged,
        final_total_cost=cost,
        solve_time=time.perf_counter() - t0,
        cost_history=tuple(history),
    )
