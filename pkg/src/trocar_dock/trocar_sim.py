"""Compliant-trocar docking testbed.

The trocar is a rigid ring of fixed axis, anchored to its rest pose by a
spring-damper, so it yields to interaction instead of being a fixed hole.
Contact between the endoscope shaft (a line segment of given radius) and
the ring is resolved analytically:

* if the shaft crosses the ring plane radially beyond the lumen clearance,
  a penalty spring pushes the shaft toward the ring center and the ring
  toward the shaft (equal and opposite);
* if the shaft has not crossed the plane but the tip hovers against the
  ring's front face within a small cushion margin, an axial penalty spring
  pushes it back, which prevents tunneling through the face during the
  approach.

Trocar pose sensing is corrupted by Gaussian noise on the center and a
small random tilt of the axis, reproducing camera-based pose retrieval.
The robot is position-controlled: commands are tracked exactly (or through
an optional first-order lag), so contact forces act on the trocar and on
the torque observer only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .kinematics import (
    JointLimits,
    KinematicChain,
    _as_unit3,
    _as_vec3,
    _check_q,
    _fk_arrays,
    linear_jacobian,
)
from . import quaternions as quat


@dataclass(frozen=True)
class TrocarModel:
    """Spring-anchored rigid ring standing in for a compliant insertion port."""

    rest_center: np.ndarray
    rest_axis: np.ndarray
    inner_radius: float = 0.0035
    anchor_stiffness: float = 500.0     # N/m, ring-to-rest spring
    anchor_damping: float = 5.0         # N*s/m
    contact_stiffness: float = 5000.0   # N/m, shaft-ring penalty spring
    mass: float = 0.05                  # kg, effective ring mass
    face_margin: float = 0.002          # m, axial cushion depth of the front face
    face_outer_radius: float = 0.025    # m, radial extent of the ring face

    def __post_init__(self):
        object.__setattr__(self, "rest_center", _as_vec3(self.rest_center, "rest_center"))
        object.__setattr__(self, "rest_axis", _as_unit3(self.rest_axis, "rest_axis"))
        self.rest_center.flags.writeable = False
        self.rest_axis.flags.writeable = False
        if self.inner_radius <= 0:
            raise ValueError("inner_radius must be positive")
        if self.anchor_stiffness <= 0 or self.contact_stiffness <= 0:
            raise ValueError("stiffnesses must be positive")
        if self.anchor_damping < 0:
            raise ValueError("anchor_damping must be nonnegative")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.face_margin <= 0 or self.face_outer_radius <= self.inner_radius:
            raise ValueError("bad face geometry")


@dataclass(frozen=True)
class TrocarState:
    """Current ring pose; the axis stays at its rest direction in this model."""

    center: np.ndarray
    velocity: np.ndarray
    axis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center, "center"))
        object.__setattr__(self, "velocity", _as_vec3(self.velocity, "velocity"))
        object.__setattr__(self, "axis", _as_unit3(self.axis, "axis"))
        for arr in (self.center, self.velocity, self.axis):
            arr.flags.writeable = False


@dataclass(frozen=True)
class EndoscopeGeometry:
    """Shaft cylinder: radius, and length measured backward from the tip."""

    shaft_radius: float = 0.002
    shaft_length: float = 0.35

    def __post_init__(self):
        if self.shaft_radius <= 0 or self.shaft_length <= 0:
            raise ValueError("shaft dimensions must be positive")


@dataclass(frozen=True)
class ContactResult:
    in_contact: bool
    force_on_scope: np.ndarray
    force_on_trocar: np.ndarray
    contact_point: np.ndarray
    penetration: float


_NO_FORCE = np.zeros(3)


def _no_contact(point) -> ContactResult:
    return ContactResult(False, _NO_FORCE.copy(), _NO_FORCE.copy(), np.asarray(point, dtype=float), 0.0)


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian trocar-pose sensing noise."""

    sigma_pos: float = 0.001     # m, per center coordinate
    sigma_axis: float = 0.0087   # rad, tilt angle scale
    seed: int = 0

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_axis < 0:
            raise ValueError("noise sigmas must be nonnegative")


def compute_contact(
    tip,
    axis,
    geom: EndoscopeGeometry,
    state: TrocarState,
    model: TrocarModel,
) -> ContactResult:
    """Resolve shaft-ring interaction at one instant.

    The shaft occupies tip - t*axis for t in [0, shaft_length]. Forces obey
    action-reaction exactly: force_on_trocar == -force_on_scope.
    """
    tip_v = _as_vec3(tip, "tip")
    axis_v = _as_unit3(axis, "axis")
    c = state.center
    w = state.axis
    clearance = model.inner_radius - geom.shaft_radius
    if clearance <= 0:
        raise ValueError("shaft does not fit the lumen")

    h_tip = float(np.dot(tip_v - c, w))
    tail = tip_v - geom.shaft_length * axis_v
    h_tail = float(np.dot(tail - c, w))
    along = float(np.dot(axis_v, w))

    if h_tip * h_tail < 0.0 and along != 0.0:
        # Shaft crosses the ring plane; check the crossing point radially.
        t_cross = h_tip / along
        p_cross = tip_v - t_cross * axis_v
        radial = p_cross - c
        radial = radial - float(np.dot(radial, w)) * w
        d = float(np.linalg.norm(radial))
        if clearance < d <= model.face_outer_radius:
            pen = d - clearance
            u_out = radial / d
            f_scope = -model.contact_stiffness * pen * u_out
            return ContactResult(True, f_scope, -f_scope, p_cross, pen)
        return _no_contact(p_cross)

    # No crossing: cushion the tip against the ring's front face.
    gap = abs(h_tip)
    radial_tip = (tip_v - c) - h_tip * w
    d_tip = float(np.linalg.norm(radial_tip))
    if gap < model.face_margin and clearance < d_tip <= model.face_outer_radius:
        pen = model.face_margin - gap
        side = 1.0 if h_tip >= 0.0 else -1.0
        f_scope = model.contact_stiffness * pen * side * w
        return ContactResult(True, f_scope, -f_scope, tip_v.copy(), pen)
    return _no_contact(tip_v)


def trocar_step(
    state: TrocarState, model: TrocarModel, external_force, dt: float
) -> TrocarState:
    """Advance the spring-anchored ring by one semi-implicit Euler step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = _as_vec3(external_force, "external_force")
    accel = (
        f
        - model.anchor_stiffness * (state.center - model.rest_center)
        - model.anchor_damping * state.velocity
    ) / model.mass
    velocity = state.velocity + dt * accel
    center = state.center + dt * velocity
    return replace(state, center=center, velocity=velocity)


def joint_external_torques(
    chain: KinematicChain, q, contact: ContactResult
) -> np.ndarray:
    """Joint torques produced by the contact force at its application point."""
    qv = _check_q(chain, q)
    if not contact.in_contact:
        return np.zeros(chain.n)
    jac = linear_jacobian(chain, qv, contact.contact_point)
    return jac.T @ contact.force_on_scope


def _perpendicular_basis(axis: np.ndarray):
    """Deterministic orthonormal pair spanning the plane normal to `axis`."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) <= 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(axis, helper)
    b1 /= np.linalg.norm(b1)
    return b1, np.cross(axis, b1)


def measure_trocar_pose(
    state: TrocarState, noise: NoiseModel, rng: np.random.Generator
):
    """Noisy (center, axis) sample of the ring pose.

    Center coordinates get independent Gaussian offsets; the axis is tilted
    by |N(0, sigma_axis^2)| about a uniformly random perpendicular direction.
    Exactly five rng draws per call, so paired runs stay stream-aligned.
    """
    offset = rng.normal(0.0, 1.0, size=3) * noise.sigma_pos
    angle = abs(rng.normal(0.0, noise.sigma_axis))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    center = state.center + offset
    if angle == 0.0:
        return center, state.axis.copy()
    b1, b2 = _perpendicular_basis(state.axis)
    tilt_axis = math.cos(phi) * b1 + math.sin(phi) * b2
    rot = quat.from_axis_angle(tilt_axis, angle)
    axis = quat.rotate(rot, state.axis)
    return center, axis / np.linalg.norm(axis)


@dataclass(frozen=True)
class SimObservation:
    """Everything the controller may see after one simulation step."""

    time: float
    q_measured: np.ndarray
    external_torques: np.ndarray
    measured_center: np.ndarray
    measured_axis: np.ndarray
    contact: ContactResult
    true_force_norm: float
    trocar_state: TrocarState
    success: bool


class TrocarSimulation:
    """Closed-loop plant: position-tracked arm, compliant ring, noisy sensing.

    One instance runs one trial; step it with the commanded configuration
    each control cycle. Contact integration uses fixed substeps so the ring
    dynamics stay stable at stiff contact settings.
    """

    def __init__(
        self,
        chain: KinematicChain,
        limits: JointLimits,
        trocar: TrocarModel,
        geometry: EndoscopeGeometry,
        noise: NoiseModel,
        q0,
        insertion_depth: float = 0.02,
        substep_dt: float = 0.001,
        tracking_time_constant: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        if insertion_depth <= 0:
            raise ValueError("insertion_depth must be positive")
        if substep_dt <= 0:
            raise ValueError("substep_dt must be positive")
        if tracking_time_constant < 0:
            raise ValueError("tracking_time_constant must be nonnegative")
        self.chain = chain
        self.limits = limits
        self.trocar_model = trocar
        self.geometry = geometry
        self.noise = noise
        self.insertion_depth = insertion_depth
        self.substep_dt = substep_dt
        self.tracking_time_constant = tracking_time_constant
        self.q = _check_q(chain, q0).copy()
        if np.any(self.q < limits.q_min - 1e-9) or np.any(self.q > limits.q_max + 1e-9):
            raise ValueError("initial configuration outside joint limits")
        self.trocar_state = TrocarState(
            center=trocar.rest_center.copy(), velocity=np.zeros(3), axis=trocar.rest_axis.copy()
        )
        self.time = 0.0
        self.rng = rng if rng is not None else np.random.default_rng(noise.seed)

    def _tool_pose(self):
        _, _, _, tip, tool_q = _fk_arrays(self.chain, self.q)
        return tip, quat.rotate(tool_q, self.chain.tool_axis_local)

    def _success(self, tip, axis) -> bool:
        """Docked: shaft through the lumen and tip past the plane by depth."""
        c = self.trocar_state.center
        w = self.trocar_state.axis
        h_tip = float(np.dot(tip - c, w))
        if h_tip < self.insertion_depth:
            return False
        along = float(np.dot(axis, w))
        if along == 0.0:
            return False
        p_cross = tip - (h_tip / along) * axis
        radial = p_cross - c
        radial = radial - float(np.dot(radial, w)) * w
        clearance = self.trocar_model.inner_radius - self.geometry.shaft_radius
        return float(np.linalg.norm(radial)) < clearance

    def _observe(self, contact: ContactResult) -> SimObservation:
        tip, axis = self._tool_pose()
        center_meas, axis_meas = measure_trocar_pose(self.trocar_state, self.noise, self.rng)
        return SimObservation(
            time=self.time,
            q_measured=self.q.copy(),
            external_torques=joint_external_torques(self.chain, self.q, contact),
            measured_center=center_meas,
            measured_axis=axis_meas,
            contact=contact,
            true_force_norm=float(np.linalg.norm(contact.force_on_scope)),
            trocar_state=self.trocar_state,
            success=self._success(tip, axis),
        )

    def initial_observation(self) -> SimObservation:
        """Pre-motion sensing sample, before any command is applied."""
        tip, axis = self._tool_pose()
        contact = compute_contact(tip, axis, self.geometry, self.trocar_state, self.trocar_model)
        return self._observe(contact)

    def step(self, q_command, dt: float) -> SimObservation:
        """Track the command, integrate contact, advance the ring, observe."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        cmd = _check_q(self.chain, q_command)
        if np.any(cmd < self.limits.q_min - 1e-9) or np.any(cmd > self.limits.q_max + 1e-9):
            raise ValueError("infeasible command")
        if self.tracking_time_constant > 0.0:
            blend = 1.0 - math.exp(-dt / self.tracking_time_constant)
            self.q = self.q + blend * (cmd - self.q)
        else:
            self.q = cmd.copy()
        tip, axis = self._tool_pose()
        n_sub = max(1, round(dt / self.substep_dt))
        sub_dt = dt / n_sub
        for _ in range(n_sub):
            contact = compute_contact(
                tip, axis, self.geometry, self.trocar_state, self.trocar_model
            )
            self.trocar_state = trocar_step(
                self.trocar_state, self.trocar_model, contact.force_on_trocar, sub_dt
            )
        contact = compute_contact(tip, axis, self.geometry, self.trocar_state, self.trocar_model)
        self.time += dt
        return self._observe(contact)
