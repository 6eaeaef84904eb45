"""Optimal-control endoscope/trocar docking.

A per-cycle box-constrained program over five weighted task costs drives a
serial arm to insert an endoscope into a compliant trocar ring; joint
torques are mapped to an estimated tip force that feeds an admittance term
for gentle contact. Includes an analytic contact simulator and a benchmark
harness comparing trials with and without the force-feedback term.
"""

from .force_pipeline import (
    AdmittanceState,
    ForceEstimate,
    admittance_update,
    estimate_tip_force,
    initial_admittance_state,
)
from .harness import (
    ArmStats,
    BenchSummary,
    ConfigError,
    ScenePlacement,
    TrialConfig,
    TrialRecord,
    TrialStep,
    config_from_dict,
    load_config,
    normalized_force_integral,
    read_trial_jsonl,
    run_bench,
    run_trial,
    write_summary_csv,
    write_timings_csv,
    write_trial_jsonl,
)
from .kinematics import (
    Frame,
    JointLimits,
    JointSpec,
    KinematicChain,
    chain_from_dict,
    endoscope_arm_7dof,
    endoscope_arm_limits,
    forward_kinematics,
    linear_jacobian,
    load_chain,
    optical_axis,
    planar_two_link,
    tip_position,
)
from .solver import (
    BoxBounds,
    SolveOutcome,
    SolverSettings,
    solve,
    solve_box_qp,
    step_bounds,
)
from .task_model import (
    CostReport,
    TaskParams,
    evaluate_cost,
    gauss_newton_residuals,
    nearest_point_on_line,
    objective_value,
    total_objective,
)
from .trocar_sim import (
    ContactResult,
    EndoscopeGeometry,
    NoiseModel,
    SimObservation,
    TrocarModel,
    TrocarSimulation,
    TrocarState,
    compute_contact,
    joint_external_torques,
    measure_trocar_pose,
    trocar_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdmittanceState",
    "ArmStats",
    "BenchSummary",
    "BoxBounds",
    "ConfigError",
    "ContactResult",
    "CostReport",
    "EndoscopeGeometry",
    "ForceEstimate",
    "Frame",
    "JointLimits",
    "JointSpec",
    "KinematicChain",
    "NoiseModel",
    "ScenePlacement",
    "SimObservation",
    "SolveOutcome",
    "SolverSettings",
    "TaskParams",
    "TrialConfig",
    "TrialRecord",
    "TrialStep",
    "TrocarModel",
    "TrocarSimulation",
    "TrocarState",
    "admittance_update",
    "chain_from_dict",
    "compute_contact",
    "config_from_dict",
    "endoscope_arm_7dof",
    "endoscope_arm_limits",
    "estimate_tip_force",
    "evaluate_cost",
    "forward_kinematics",
    "gauss_newton_residuals",
    "initial_admittance_state",
    "joint_external_torques",
    "linear_jacobian",
    "load_chain",
    "load_config",
    "measure_trocar_pose",
    "nearest_point_on_line",
    "normalized_force_integral",
    "objective_value",
    "optical_axis",
    "planar_two_link",
    "read_trial_jsonl",
    "run_bench",
    "run_trial",
    "solve",
    "solve_box_qp",
    "step_bounds",
    "tip_position",
    "total_objective",
    "trocar_step",
    "write_summary_csv",
    "write_timings_csv",
    "write_trial_jsonl",
]
