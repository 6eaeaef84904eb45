"""Per-cycle docking objective: five weighted cost terms over joint space.

Terms (1-based, matching the weight vector order):

1. squared distance of the endoscope tip to the insertion line;
2. squared distance of the tip to the goal point;
3. squared error between the optical axis and the insertion direction;
4. squared joint motion relative to the previous configuration;
5. smoothed (non-squared) distance of the tip to the admittance target,
   the force-yielding term.

Term 5 uses sqrt(d^2 + eps^2) - eps instead of the plain norm so it is
differentiable at d = 0 while deviating from the plain norm by at most eps.
All terms expose analytic gradients; the axis term differentiates the
optical axis by central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import KinematicChain, _as_unit3, _as_vec3, _check_q, _fk_arrays, optical_axis
from . import quaternions as quat

N_TERMS = 5

# Step for the finite-difference Jacobian of the optical axis.
AXIS_FD_STEP = 1e-6


@dataclass(frozen=True)
class TaskParams:
    """Sensed parameters consumed by one control-cycle solve.

    axis_anchor: measured trocar center, a point on the insertion line (m).
    insertion_axis: unit direction of the insertion line.
    goal_point: target tip position (m).
    admittance_ref: force-yield target for term 5, or None to drop the term
        (force feedback disabled, or no force above the deadband this cycle).
    q_prev: previous joint configuration (warm start and motion reference).
    weights: five strictly positive term weights.
    smoothing_eps: smoothing length (m) of term 5.
    """

    axis_anchor: np.ndarray
    insertion_axis: np.ndarray
    goal_point: np.ndarray
    admittance_ref: np.ndarray | None
    q_prev: np.ndarray
    weights: np.ndarray
    smoothing_eps: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "axis_anchor", _as_vec3(self.axis_anchor, "axis_anchor"))
        axis = _as_vec3(self.insertion_axis, "insertion_axis")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("insertion_axis must be unit length")
        object.__setattr__(self, "insertion_axis", axis)
        object.__setattr__(self, "goal_point", _as_vec3(self.goal_point, "goal_point"))
        if self.admittance_ref is not None:
            object.__setattr__(
                self, "admittance_ref", _as_vec3(self.admittance_ref, "admittance_ref")
            )
        q_prev = np.asarray(self.q_prev, dtype=float).reshape(-1)
        if not np.all(np.isfinite(q_prev)):
            raise ValueError("q_prev must be finite")
        object.__setattr__(self, "q_prev", q_prev)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (N_TERMS,):
            raise ValueError(f"weights must have {N_TERMS} entries")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        if not self.smoothing_eps > 0:
            raise ValueError("smoothing_eps must be positive")
        for arr in (self.axis_anchor, self.insertion_axis, self.goal_point, self.q_prev, self.weights):
            arr.flags.writeable = False
        if self.admittance_ref is not None:
            self.admittance_ref.flags.writeable = False


@dataclass(frozen=True)
class CostReport:
    """Evaluated objective: raw term values plus weighted total and gradients."""

    values: np.ndarray        # (5,) raw term values, each >= 0
    total: float              # sum_i w_i * values_i
    gradient: np.ndarray      # (n,) gradient of the weighted total
    term_gradients: np.ndarray  # (5, n) raw per-term gradients


def nearest_point_on_line(point, anchor, direction) -> np.ndarray:
    """Orthogonal projection of `point` onto the line anchor + t*direction."""
    p = _as_vec3(point, "point")
    a = _as_vec3(anchor, "anchor")
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction not normalized")
    return a + np.dot(p - a, d) * d


def axis_jacobian_fd(chain: KinematicChain, q, h: float = AXIS_FD_STEP) -> np.ndarray:
    """3xn central-difference Jacobian of the optical axis."""
    qv = _check_q(chain, q).copy()
    jac = np.empty((3, qv.size))
    for j in range(qv.size):
        orig = qv[j]
        qv[j] = orig + h
        plus = optical_axis(chain, qv)
        qv[j] = orig - h
        minus = optical_axis(chain, qv)
        qv[j] = orig
        jac[:, j] = (plus - minus) / (2.0 * h)
    return jac


def _tool_state(chain: KinematicChain, q: np.ndarray):
    """Tip position, optical axis, and tip Jacobian from one FK sweep."""
    origins, axes, _, tip, tool_q = _fk_arrays(chain, q)
    jac = np.cross(axes, tip[None, :] - origins).T
    a = quat.rotate(tool_q, chain.tool_axis_local)
    return tip, a, jac


def _term_eval(term: int, q, params: TaskParams, tip, axis, jac, axis_jac):
    """(value, gradient) of one raw term given precomputed kinematics."""
    if term == 1:
        v = tip - params.axis_anchor
        v = v - np.dot(v, params.insertion_axis) * params.insertion_axis
        return float(v @ v), 2.0 * (jac.T @ v)
    if term == 2:
        v = tip - params.goal_point
        return float(v @ v), 2.0 * (jac.T @ v)
    if term == 3:
        v = axis - params.insertion_axis
        return float(v @ v), 2.0 * (axis_jac.T @ v)
    if term == 4:
        v = q - params.q_prev
        return float(v @ v), 2.0 * v
    if term == 5:
        if params.admittance_ref is None:
            return 0.0, np.zeros_like(q)
        v = tip - params.admittance_ref
        eps = params.smoothing_eps
        phi = math.sqrt(float(v @ v) + eps * eps)
        return phi - eps, jac.T @ (v / phi)
    raise ValueError("cost term index out of range")


def evaluate_cost(term: int, q, params: TaskParams, chain: KinematicChain):
    """Value and analytic gradient of one raw (unweighted) cost term."""
    if term not in (1, 2, 3, 4, 5):
        raise ValueError("cost term index out of range")
    qv = _check_q(chain, q)
    tip, axis, jac = _tool_state(chain, qv)
    axis_jac = axis_jacobian_fd(chain, qv) if term == 3 else None
    return _term_eval(term, qv, params, tip, axis, jac, axis_jac)


def total_objective(q, params: TaskParams, chain: KinematicChain) -> CostReport:
    """Weighted objective with per-term values and gradients."""
    qv = _check_q(chain, q)
    tip, axis, jac = _tool_state(chain, qv)
    axis_jac = axis_jacobian_fd(chain, qv)
    values = np.empty(N_TERMS)
    grads = np.empty((N_TERMS, qv.size))
    for i in range(N_TERMS):
        values[i], grads[i] = _term_eval(i + 1, qv, params, tip, axis, jac, axis_jac)
    total = float(params.weights @ values)
    gradient = params.weights @ grads
    return CostReport(values=values, total=total, gradient=gradient, term_gradients=grads)


def objective_value(q, params: TaskParams, chain: KinematicChain) -> float:
    """Weighted total only; cheap enough for line searches."""
    qv = _check_q(chain, q)
    origins, axes, _, tip, tool_q = _fk_arrays(chain, qv)
    a = quat.rotate(tool_q, chain.tool_axis_local)
    w = params.weights
    v1 = tip - params.axis_anchor
    v1 = v1 - np.dot(v1, params.insertion_axis) * params.insertion_axis
    v2 = tip - params.goal_point
    v3 = a - params.insertion_axis
    v4 = qv - params.q_prev
    total = w[0] * float(v1 @ v1) + w[1] * float(v2 @ v2)
    total += w[2] * float(v3 @ v3) + w[3] * float(v4 @ v4)
    if params.admittance_ref is not None:
        v5 = tip - params.admittance_ref
        eps = params.smoothing_eps
        total += w[4] * (math.sqrt(float(v5 @ v5) + eps * eps) - eps)
    return total


def gauss_newton_residuals(q, params: TaskParams, chain: KinematicChain):
    """Stacked weighted residual vector and Jacobian for the solver.

    The squared terms contribute sqrt(w_i)-scaled residual blocks. The
    smoothed yield term contributes r5 = sqrt(w5) * v / sqrt(phi + eps) with
    phi = sqrt(|v|^2 + eps^2), an exact decomposition: |r5|^2 equals the
    weighted term value. The total objective equals |rho|^2 and its gradient
    equals 2 * J^T rho (the axis block uses the finite-difference Jacobian).
    """
    qv = _check_q(chain, q)
    n = qv.size
    tip, axis, jac = _tool_state(chain, qv)
    axis_jac = axis_jacobian_fd(chain, qv)
    w = params.weights
    sw = np.sqrt(w)

    g = params.insertion_axis
    v1 = tip - params.axis_anchor
    v1 = v1 - np.dot(v1, g) * g
    j1 = jac - np.outer(g, g @ jac)

    rows = 3 + 3 + 3 + n + (0 if params.admittance_ref is None else 3)
    rho = np.empty(rows)
    jrho = np.empty((rows, n))
    rho[0:3] = sw[0] * v1
    jrho[0:3] = sw[0] * j1
    rho[3:6] = sw[1] * (tip - params.goal_point)
    jrho[3:6] = sw[1] * jac
    rho[6:9] = sw[2] * (axis - g)
    jrho[6:9] = sw[2] * axis_jac
    rho[9 : 9 + n] = sw[3] * (qv - params.q_prev)
    jrho[9 : 9 + n] = sw[3] * np.eye(n)
    if params.admittance_ref is not None:
        v5 = tip - params.admittance_ref
        eps = params.smoothing_eps
        phi = math.sqrt(float(v5 @ v5) + eps * eps)
        scale = 1.0 / math.sqrt(phi + eps)
        rho[9 + n :] = sw[4] * scale * v5
        dr_dv = scale * np.eye(3) - (scale / (2.0 * phi * (phi + eps))) * np.outer(v5, v5)
        jrho[9 + n :] = sw[4] * (dr_dv @ jac)
    return rho, jrho
