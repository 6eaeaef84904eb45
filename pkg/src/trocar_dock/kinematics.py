"""Serial revolute-joint arm model with an endoscope tool frame.

The chain is described joint-by-joint as an explicit rotation axis plus a
fixed offset from the parent frame (no DH tables). Rotations are carried as
unit quaternions and renormalized whenever a composition chain exceeds 16
multiplies, so frame orthonormality holds to well below 1e-9 even for long
chains.

Provides forward kinematics, the endoscope tip position, the optical-axis
direction, and the 3xn linear geometric Jacobian for any point rigidly
attached to the tool body.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quaternions as quat

# Quaternion renormalization cadence for long composition chains.
_RENORM_EVERY = 16


def _as_vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _as_unit3(v, name: str) -> np.ndarray:
    a = _as_vec3(v, name)
    n = np.linalg.norm(a)
    if n < 1e-9:
        raise ValueError(f"{name} must be a nonzero direction")
    return a / n


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: fixed offset from the parent frame plus a local axis.

    origin_offset: translation (m) from the parent frame to this joint.
    orientation_offset: unit quaternion (w, x, y, z) fixed rotation.
    axis: unit rotation axis expressed in this joint's local frame.
    """

    origin_offset: np.ndarray
    orientation_offset: np.ndarray
    axis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin_offset", _as_vec3(self.origin_offset, "origin_offset"))
        q = np.asarray(self.orientation_offset, dtype=float).reshape(-1)
        if q.shape != (4,):
            raise ValueError("orientation_offset must be a quaternion (w, x, y, z)")
        object.__setattr__(self, "orientation_offset", quat.normalize(q))
        object.__setattr__(self, "axis", _as_unit3(self.axis, "axis"))
        for arr in (self.origin_offset, self.orientation_offset, self.axis):
            arr.flags.writeable = False


@dataclass(frozen=True)
class KinematicChain:
    """Base-to-tool ordered revolute chain with an endoscope attachment.

    tool_tip_offset: endoscope tip position (m) in the last joint frame.
    tool_axis_local: unit optical-axis direction in the last joint frame.
    """

    joints: tuple[JointSpec, ...]
    tool_tip_offset: np.ndarray
    tool_axis_local: np.ndarray

    def __post_init__(self):
        joints = tuple(self.joints)
        if len(joints) < 1:
            raise ValueError("chain needs at least one joint")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "tool_tip_offset", _as_vec3(self.tool_tip_offset, "tool_tip_offset"))
        object.__setattr__(self, "tool_axis_local", _as_unit3(self.tool_axis_local, "tool_axis_local"))
        self.tool_tip_offset.flags.writeable = False
        self.tool_axis_local.flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def _statics(self):
        """Per-joint plain-float constants for the FK inner loop."""
        cached = getattr(self, "_statics_cache", None)
        if cached is None:
            cached = []
            for spec in self.joints:
                ox, oy, oz = (float(v) for v in spec.origin_offset)
                qw, qx, qy, qz = (float(v) for v in spec.orientation_offset)
                ax, ay, az = (float(v) for v in spec.axis)
                has_offset = abs(qw - 1.0) > 1e-15 or abs(qx) > 1e-15 or abs(qy) > 1e-15 or abs(qz) > 1e-15
                cached.append((ox, oy, oz, qw, qx, qy, qz, ax, ay, az, has_offset))
            cached = tuple(cached)
            object.__setattr__(self, "_statics_cache", cached)
        return cached


@dataclass(frozen=True)
class JointLimits:
    """Joint position range and per-joint speed limits."""

    q_min: np.ndarray
    q_max: np.ndarray
    qdot_max: np.ndarray

    def __post_init__(self):
        q_min = np.asarray(self.q_min, dtype=float).reshape(-1)
        q_max = np.asarray(self.q_max, dtype=float).reshape(-1)
        qdot = np.asarray(self.qdot_max, dtype=float).reshape(-1)
        if not (q_min.shape == q_max.shape == qdot.shape):
            raise ValueError("limit vectors must share one length")
        if not np.all(q_min < q_max):
            raise ValueError("q_min must be strictly below q_max")
        if not np.all(qdot > 0):
            raise ValueError("qdot_max must be strictly positive")
        object.__setattr__(self, "q_min", q_min)
        object.__setattr__(self, "q_max", q_max)
        object.__setattr__(self, "qdot_max", qdot)
        for arr in (self.q_min, self.q_max, self.qdot_max):
            arr.flags.writeable = False


@dataclass(frozen=True)
class Frame:
    """Pose of one frame: world position and unit-quaternion rotation."""

    position: np.ndarray
    rotation: np.ndarray

    def rotation_matrix(self) -> np.ndarray:
        return quat.to_matrix(self.rotation)


def _check_q(chain: KinematicChain, q) -> np.ndarray:
    arr = np.asarray(q, dtype=float).reshape(-1)
    if arr.shape != (chain.n,):
        raise ValueError("bad joint vector length")
    return arr


def _fk_arrays(chain: KinematicChain, q: np.ndarray):
    """Core FK sweep with scalar quaternion math (hot path).

    Returns (joint_origins (n,3), joint_axes_world (n,3), joint_quats (n,4),
    tip_position (3,), tool_quat (4,)).
    """
    n = chain.n
    origins = np.empty((n, 3))
    axes = np.empty((n, 3))
    quats = np.empty((n, 4))
    ql = q.tolist()
    px = py = pz = 0.0
    rw, rx, ry, rz = 1.0, 0.0, 0.0, 0.0
    muls = 0
    for j, (ox, oy, oz, qw, qx, qy, qz, ax, ay, az, has_offset) in enumerate(chain._statics):
        # p += R * origin_offset
        tx = 2.0 * (ry * oz - rz * oy)
        ty = 2.0 * (rz * ox - rx * oz)
        tz = 2.0 * (rx * oy - ry * ox)
        px += ox + rw * tx + (ry * tz - rz * ty)
        py += oy + rw * ty + (rz * tx - rx * tz)
        pz += oz + rw * tz + (rx * ty - ry * tx)
        if has_offset:
            rw, rx, ry, rz = (
                rw * qw - rx * qx - ry * qy - rz * qz,
                rw * qx + rx * qw + ry * qz - rz * qy,
                rw * qy - rx * qz + ry * qw + rz * qx,
                rw * qz + rx * qy - ry * qx + rz * qw,
            )
            muls += 1
        half = 0.5 * ql[j]
        bw = math.cos(half)
        s = math.sin(half)
        bx, by, bz = ax * s, ay * s, az * s
        rw, rx, ry, rz = (
            rw * bw - rx * bx - ry * by - rz * bz,
            rw * bx + rx * bw + ry * bz - rz * by,
            rw * by - rx * bz + ry * bw + rz * bx,
            rw * bz + rx * by - ry * bx + rz * bw,
        )
        muls += 1
        if muls >= _RENORM_EVERY:
            norm = math.sqrt(rw * rw + rx * rx + ry * ry + rz * rz)
            rw, rx, ry, rz = rw / norm, rx / norm, ry / norm, rz / norm
            muls = 0
        origins[j, 0] = px
        origins[j, 1] = py
        origins[j, 2] = pz
        # world axis = R * local axis
        tx = 2.0 * (ry * az - rz * ay)
        ty = 2.0 * (rz * ax - rx * az)
        tz = 2.0 * (rx * ay - ry * ax)
        axes[j, 0] = ax + rw * tx + (ry * tz - rz * ty)
        axes[j, 1] = ay + rw * ty + (rz * tx - rx * tz)
        axes[j, 2] = az + rw * tz + (rx * ty - ry * tx)
        quats[j, 0] = rw
        quats[j, 1] = rx
        quats[j, 2] = ry
        quats[j, 3] = rz
    ox, oy, oz = chain.tool_tip_offset
    tx = 2.0 * (ry * oz - rz * oy)
    ty = 2.0 * (rz * ox - rx * oz)
    tz = 2.0 * (rx * oy - ry * ox)
    tip = np.array(
        [
            px + ox + rw * tx + (ry * tz - rz * ty),
            py + oy + rw * ty + (rz * tx - rx * tz),
            pz + oz + rw * tz + (rx * ty - ry * tx),
        ]
    )
    return origins, axes, quats, tip, np.array([rw, rx, ry, rz])


def _tool_rotation_scalars(chain: KinematicChain, q: np.ndarray):
    """Tool-frame quaternion components only (no position bookkeeping)."""
    ql = q.tolist()
    rw, rx, ry, rz = 1.0, 0.0, 0.0, 0.0
    muls = 0
    for j, (_, _, _, qw, qx, qy, qz, ax, ay, az, has_offset) in enumerate(chain._statics):
        if has_offset:
            rw, rx, ry, rz = (
                rw * qw - rx * qx - ry * qy - rz * qz,
                rw * qx + rx * qw + ry * qz - rz * qy,
                rw * qy - rx * qz + ry * qw + rz * qx,
                rw * qz + rx * qy - ry * qx + rz * qw,
            )
            muls += 1
        half = 0.5 * ql[j]
        bw = math.cos(half)
        s = math.sin(half)
        bx, by, bz = ax * s, ay * s, az * s
        rw, rx, ry, rz = (
            rw * bw - rx * bx - ry * by - rz * bz,
            rw * bx + rx * bw + ry * bz - rz * by,
            rw * by - rx * bz + ry * bw + rz * bx,
            rw * bz + rx * by - ry * bx + rz * bw,
        )
        muls += 1
        if muls >= _RENORM_EVERY:
            norm = math.sqrt(rw * rw + rx * rx + ry * ry + rz * rz)
            rw, rx, ry, rz = rw / norm, rx / norm, ry / norm, rz / norm
            muls = 0
    return rw, rx, ry, rz


def forward_kinematics(chain: KinematicChain, q) -> list[Frame]:
    """Frames of every joint plus the tool frame, composed base to tool."""
    qv = _check_q(chain, q)
    origins, _, quats, tip, tool_q = _fk_arrays(chain, qv)
    frames = [Frame(origins[j].copy(), quats[j].copy()) for j in range(chain.n)]
    frames.append(Frame(tip, tool_q.copy()))
    return frames


def tip_position(chain: KinematicChain, q) -> np.ndarray:
    """World position (m) of the endoscope tip."""
    qv = _check_q(chain, q)
    return _fk_arrays(chain, qv)[3]


def optical_axis(chain: KinematicChain, q) -> np.ndarray:
    """World-frame unit direction of the endoscope optical axis."""
    qv = _check_q(chain, q)
    rw, rx, ry, rz = _tool_rotation_scalars(chain, qv)
    ax, ay, az = chain.tool_axis_local
    tx = 2.0 * (ry * az - rz * ay)
    ty = 2.0 * (rz * ax - rx * az)
    tz = 2.0 * (rx * ay - ry * ax)
    return np.array(
        [
            ax + rw * tx + (ry * tz - rz * ty),
            ay + rw * ty + (rz * tx - rx * tz),
            az + rw * tz + (rx * ty - ry * tx),
        ]
    )


def linear_jacobian(chain: KinematicChain, q, attachment_point) -> np.ndarray:
    """3xn positional Jacobian of a point rigidly attached to the tool body.

    Column j is (world axis of joint j) x (attachment_point - joint j origin),
    the revolute-joint velocity contribution.
    """
    qv = _check_q(chain, q)
    point = _as_vec3(attachment_point, "attachment_point")
    origins, axes, _, _, _ = _fk_arrays(chain, qv)
    return np.cross(axes, point[None, :] - origins).T


# ---------------------------------------------------------------------------
# chain construction helpers


def chain_from_dict(doc: dict) -> KinematicChain:
    """Build a chain from its JSON document form.

    Expected shape::

        {"joints": [{"origin": [x,y,z], "orientation_rpy": [r,p,y],
                     "axis": [x,y,z]}, ...],
         "tool_tip_offset": [x,y,z], "tool_axis": [x,y,z]}

    Angles in radians, lengths in meters.
    """
    try:
        joint_docs = doc["joints"]
        tool_tip = doc["tool_tip_offset"]
        tool_axis = doc["tool_axis"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"chain document missing field: {exc}") from exc
    joints = []
    for jd in joint_docs:
        rpy = jd.get("orientation_rpy", (0.0, 0.0, 0.0))
        joints.append(
            JointSpec(
                origin_offset=jd.get("origin", (0.0, 0.0, 0.0)),
                orientation_offset=quat.from_rpy(*[float(x) for x in rpy]),
                axis=jd["axis"],
            )
        )
    return KinematicChain(tuple(joints), tool_tip, tool_axis)


def load_chain(path) -> KinematicChain:
    with open(Path(path)) as fh:
        return chain_from_dict(json.load(fh))


def planar_two_link(link_length: float = 1.0) -> KinematicChain:
    """Planar 2R arm in the xy-plane, both axes +z, tip one link past joint 2."""
    z = (0.0, 0.0, 1.0)
    ident = quat.IDENTITY
    return KinematicChain(
        (
            JointSpec((0.0, 0.0, 0.0), ident, z),
            JointSpec((link_length, 0.0, 0.0), ident, z),
        ),
        tool_tip_offset=(link_length, 0.0, 0.0),
        tool_axis_local=(1.0, 0.0, 0.0),
    )


def endoscope_arm_7dof() -> KinematicChain:
    """7-DOF medical-arm-like chain with a rigid endoscope on the flange.

    Link offsets are nominal values picked for a desk-scale model of an
    alternating z/y-axis 7R arm; the endoscope tip sits 0.40 m past the
    flange along its +z optical axis. Override via a chain JSON file when
    modeling a specific robot.
    """
    ident = quat.IDENTITY
    z = (0.0, 0.0, 1.0)
    y = (0.0, 1.0, 0.0)
    heights = (0.1575, 0.2025, 0.2045, 0.2155, 0.1845, 0.2155, 0.0810)
    axes = (z, y, z, y, z, y, z)
    joints = tuple(
        JointSpec((0.0, 0.0, h), ident, ax) for h, ax in zip(heights, axes)
    )
    return KinematicChain(
        joints,
        tool_tip_offset=(0.0, 0.0, 0.40),
        tool_axis_local=(0.0, 0.0, 1.0),
    )


def endoscope_arm_limits(qdot_max: float = 0.3) -> JointLimits:
    """Nominal limits for :func:`endoscope_arm_7dof`.

    The default speed cap (0.3 rad/s per joint) keeps tip speeds at the
    gentle rates appropriate near a patient port; pass a larger value for
    free-space motion.
    """
    deg = math.pi / 180.0
    q_max = np.array([170, 120, 170, 120, 170, 120, 175], dtype=float) * deg
    return JointLimits(-q_max, q_max, np.full(7, float(qdot_max)))


BUILTIN_CHAINS = {
    "endoscope_arm_7dof": endoscope_arm_7dof,
    "planar_two_link": planar_two_link,
}
