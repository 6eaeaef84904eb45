"""External tip-force estimation and the admittance law feeding term 5.

Joint torques attributable to environment contact are mapped to a 3-vector
tip force through the linear Jacobian. Because the Jacobian is 3xn rather
than square, the inverse-transpose map is realized as the damped
least-squares solution of J' f = tau. The admittance law low-passes the
estimate, applies a deadband, and offsets the yield target from the current
tip along the measured force direction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kinematics import KinematicChain, _check_q, linear_jacobian, tip_position


@dataclass(frozen=True)
class ForceEstimate:
    """Estimated tip force plus diagnostics of the least-squares solve."""

    f_ext: np.ndarray       # (3,) newtons
    residual: float         # |J' f - tau|, newton-meters
    conditioning: float     # smallest singular value of the Jacobian


@dataclass(frozen=True)
class AdmittanceState:
    """Yield target and filtered force of the admittance controller.

    gain_alpha: meters of target offset per newton of deadbanded force.
    filter_beta: per-cycle low-pass coefficient in [0, 1).
    force_deadband: newtons below which the filtered force produces no offset.
    """

    r: np.ndarray
    f_filtered: np.ndarray
    gain_alpha: float = 0.005
    filter_beta: float = 0.9
    force_deadband: float = 0.5

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).reshape(-1)
        f = np.asarray(self.f_filtered, dtype=float).reshape(-1)
        if r.shape != (3,) or f.shape != (3,):
            raise ValueError("r and f_filtered must be 3-vectors")
        if self.gain_alpha < 0:
            raise ValueError("gain_alpha must be nonnegative")
        if not 0.0 <= self.filter_beta < 1.0:
            raise ValueError("filter_beta must lie in [0, 1)")
        if self.force_deadband < 0:
            raise ValueError("force_deadband must be nonnegative")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "f_filtered", f)
        r.flags.writeable = False
        f.flags.writeable = False

    def deadbanded_force(self) -> np.ndarray:
        """Filtered force shrunk by the deadband (zero below it)."""
        mag = float(np.linalg.norm(self.f_filtered))
        if mag <= self.force_deadband:
            return np.zeros(3)
        return self.f_filtered * (1.0 - self.force_deadband / mag)


def initial_admittance_state(
    tip, gain_alpha: float = 0.005, filter_beta: float = 0.9, force_deadband: float = 0.5
) -> AdmittanceState:
    """Quiescent state anchored at the given tip position."""
    return AdmittanceState(
        r=np.asarray(tip, dtype=float),
        f_filtered=np.zeros(3),
        gain_alpha=gain_alpha,
        filter_beta=filter_beta,
        force_deadband=force_deadband,
    )


def estimate_tip_force(
    chain: KinematicChain, q_c, tau, damping: float = 1e-6
) -> ForceEstimate:
    """Least-squares tip force explaining the measured external torques.

    Solves J' f = tau with J the 3xn tip Jacobian at the current
    configuration, via the SVD with Tikhonov damping scaled by the largest
    singular value: f = sum_i s_i/(s_i^2 + delta) u_i (v_i . tau). With zero
    damping and full row rank this is the exact minimal-residual solution.
    """
    qv = _check_q(chain, q_c)
    t = np.asarray(tau, dtype=float).reshape(-1)
    if t.shape != (chain.n,):
        raise ValueError("bad joint vector length")
    if not np.all(np.isfinite(t)):
        raise ValueError("torques must be finite")
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    jac = linear_jacobian(chain, qv, tip_position(chain, qv))
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s[0] <= 0.0:
        raise ValueError("force unobservable at this configuration")
    delta = damping * s[0] ** 2
    denom = s**2 + delta
    coeff = np.divide(s, denom, out=np.zeros_like(s), where=denom > 0)
    f = u @ (coeff * (vt @ t))
    residual = float(np.linalg.norm(jac.T @ f - t))
    return ForceEstimate(f_ext=f, residual=residual, conditioning=float(s[-1]))


def admittance_update(
    state: AdmittanceState, tip, estimate: ForceEstimate, dt: float
) -> AdmittanceState:
    """One admittance cycle: filter the force, deadband it, re-anchor r.

    The filter coefficient is per cycle, so `dt` only asserts the call is a
    forward step; the new yield target is tip + gain * deadbanded force.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    tip_v = np.asarray(tip, dtype=float).reshape(-1)
    f_new = state.filter_beta * state.f_filtered + (1.0 - state.filter_beta) * estimate.f_ext
    updated = replace(state, r=state.r, f_filtered=f_new)
    return replace(updated, r=tip_v + state.gain_alpha * updated.deadbanded_force())
