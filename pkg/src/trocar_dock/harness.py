"""Trial runner and benchmark for the docking controller.

A trial wires the loop: sense the trocar pose (noisy) -> assemble the task
parameters -> solve the cycle program -> command the simulator -> estimate
the contact force for the next cycle's admittance update. It ends at
insertion success or at the time budget, and is scored by the normalized
force integral (time-averaged contact force norm) -- lower is better.

The bench runs seed-paired trials with the force-feedback term on and off
and aggregates the metric per arm. Everything downstream of the config and
seeds is deterministic, so summary files are byte-reproducible; wall-clock
solve timings are kept in a separate timings file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .force_pipeline import (
    ForceEstimate,
    admittance_update,
    estimate_tip_force,
    initial_admittance_state,
)
from .kinematics import (
    BUILTIN_CHAINS,
    JointLimits,
    KinematicChain,
    chain_from_dict,
    endoscope_arm_limits,
    load_chain,
    optical_axis,
    tip_position,
)
from .solver import SolverSettings, step_bounds, solve
from .task_model import TaskParams, total_objective
from .trocar_sim import (
    EndoscopeGeometry,
    NoiseModel,
    TrocarModel,
    TrocarSimulation,
    _perpendicular_basis,
)
from . import quaternions as quat


class ConfigError(ValueError):
    """Invalid or inconsistent trial configuration."""


DEFAULT_CHAIN = "builtin:endoscope_arm_7dof"
DEFAULT_INITIAL_Q = (0.0, 0.45, 0.0, -1.1, 0.0, 0.85, 0.0)
DEFAULT_WEIGHTS = (20.0, 10.0, 10.0, 1.0, 50.0)


@dataclass(frozen=True)
class ScenePlacement:
    """Trocar rest pose relative to the initial endoscope pose.

    The ring is placed ahead of the tip along the initial optical axis,
    shifted sideways, with its axis tilted; this is the default benchmark
    scene when no explicit trocar pose is configured.
    """

    approach_distance: float = 0.05
    lateral_offset: float = 0.005
    angular_offset: float = math.radians(10.0)

    def place(self, chain: KinematicChain, q0) -> tuple[np.ndarray, np.ndarray]:
        tip0 = tip_position(chain, q0)
        a0 = optical_axis(chain, q0)
        b1, b2 = _perpendicular_basis(a0)
        center = tip0 + self.approach_distance * a0 + self.lateral_offset * b1
        axis = quat.rotate(quat.from_axis_angle(b2, self.angular_offset), a0)
        return center, axis / np.linalg.norm(axis)


@dataclass(frozen=True)
class TrialConfig:
    """Fully resolved inputs of one docking trial."""

    chain: KinematicChain
    limits: JointLimits
    initial_q: np.ndarray
    trocar: TrocarModel
    geometry: EndoscopeGeometry
    noise: NoiseModel
    solver_settings: SolverSettings
    weights: np.ndarray
    smoothing_eps: float
    gain_alpha: float
    filter_beta: float
    force_deadband: float
    ff_enabled: bool
    dt: float
    substep_dt: float
    max_duration: float
    insertion_depth: float
    tracking_time_constant: float
    force_estimate_damping: float
    seed: int

    def __post_init__(self):
        if self.dt <= 0 or self.substep_dt <= 0:
            raise ConfigError("dt and substep_dt must be positive")
        if self.max_duration <= 0:
            raise ConfigError("max_duration must be positive")
        if self.insertion_depth <= 0:
            raise ConfigError("insertion_depth must be positive")
        q0 = np.asarray(self.initial_q, dtype=float).reshape(-1)
        if q0.shape != (self.chain.n,):
            raise ConfigError("initial_q length does not match the chain")
        object.__setattr__(self, "initial_q", q0)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "weights", w)

    def with_seed(self, seed: int) -> "TrialConfig":
        return replace(self, seed=int(seed), noise=replace(self.noise, seed=int(seed)))

    def with_ff(self, enabled: bool) -> "TrialConfig":
        return replace(self, ff_enabled=bool(enabled))


def _section(doc: dict, name: str, allowed: set[str]) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return sec


def _build_chain(spec, base_dir: Path) -> tuple[KinematicChain, str | None]:
    if spec is None:
        spec = DEFAULT_CHAIN
    if isinstance(spec, dict):
        return chain_from_dict(spec), None
    if isinstance(spec, str):
        if spec.startswith("builtin:"):
            name = spec.split(":", 1)[1]
            if name not in BUILTIN_CHAINS:
                raise ConfigError(f"unknown builtin chain '{name}'")
            return BUILTIN_CHAINS[name](), name
        path = Path(spec)
        if not path.is_absolute():
            path = base_dir / path
        try:
            return load_chain(path), None
        except OSError as exc:
            raise ConfigError(f"cannot read chain file: {exc}") from exc
    raise ConfigError("chain must be a builtin name, a file path, or an inline object")


def config_from_dict(doc: dict, base_dir: Path | str = ".") -> TrialConfig:
    """Parse one trial-config JSON document (all sections optional)."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known_top = {
        "chain", "limits", "initial_q", "trocar", "scene", "endoscope",
        "noise", "solver", "weights", "admittance", "sim", "ff_enabled", "seed",
    }
    unknown = set(doc) - known_top
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = Path(base_dir)
    try:
        chain, builtin_name = _build_chain(doc.get("chain"), base)

        lim = _section(doc, "limits", {"q_min", "q_max", "qdot_max"})
        if lim:
            if not {"q_min", "q_max", "qdot_max"} <= set(lim):
                raise ConfigError("limits needs q_min, q_max and qdot_max")
            limits = JointLimits(lim["q_min"], lim["q_max"], lim["qdot_max"])
        elif builtin_name == "endoscope_arm_7dof":
            limits = endoscope_arm_limits()
        elif builtin_name == "planar_two_link":
            limits = JointLimits([-math.pi] * 2, [math.pi] * 2, [0.5] * 2)
        else:
            raise ConfigError("limits section required for a custom chain")

        if "initial_q" in doc:
            initial_q = doc["initial_q"]
        elif builtin_name == "endoscope_arm_7dof":
            initial_q = DEFAULT_INITIAL_Q
        else:
            raise ConfigError("initial_q required for this chain")

        sim = _section(doc, "sim", {
            "dt", "substep_dt", "max_duration", "insertion_depth",
            "tracking_time_constant", "force_estimate_damping",
        })
        dt = float(sim.get("dt", 0.005))
        substep_dt = float(sim.get("substep_dt", 0.001))
        max_duration = float(sim.get("max_duration", 30.0))
        insertion_depth = float(sim.get("insertion_depth", 0.02))
        tracking_tc = float(sim.get("tracking_time_constant", 0.0))
        force_damping = float(sim.get("force_estimate_damping", 1e-6))

        troc = _section(doc, "trocar", {
            "rest_center", "rest_axis", "inner_radius", "anchor_stiffness",
            "anchor_damping", "contact_stiffness", "mass", "face_margin",
            "face_outer_radius",
        })
        scene = _section(doc, "scene", {
            "approach_distance", "lateral_offset", "angular_offset_deg",
        })
        if ("rest_center" in troc) != ("rest_axis" in troc):
            raise ConfigError("trocar rest_center and rest_axis must be given together")
        if "rest_center" in troc:
            center, axis = np.asarray(troc["rest_center"], dtype=float), troc["rest_axis"]
            if scene:
                raise ConfigError("give either an explicit trocar pose or a scene, not both")
        else:
            placement = ScenePlacement(
                approach_distance=float(scene.get("approach_distance", 0.05)),
                lateral_offset=float(scene.get("lateral_offset", 0.005)),
                angular_offset=math.radians(float(scene.get("angular_offset_deg", 10.0))),
            )
            center, axis = placement.place(chain, initial_q)
        trocar = TrocarModel(
            rest_center=center,
            rest_axis=axis,
            inner_radius=float(troc.get("inner_radius", 0.0035)),
            anchor_stiffness=float(troc.get("anchor_stiffness", 500.0)),
            anchor_damping=float(troc.get("anchor_damping", 5.0)),
            contact_stiffness=float(troc.get("contact_stiffness", 5000.0)),
            mass=float(troc.get("mass", 0.05)),
            face_margin=float(troc.get("face_margin", 0.002)),
            face_outer_radius=float(troc.get("face_outer_radius", 0.025)),
        )

        endo = _section(doc, "endoscope", {"shaft_radius", "shaft_length"})
        geometry = EndoscopeGeometry(
            shaft_radius=float(endo.get("shaft_radius", 0.002)),
            shaft_length=float(endo.get("shaft_length", 0.35)),
        )

        noi = _section(doc, "noise", {"sigma_pos", "sigma_axis"})
        seed = int(doc.get("seed", 0))
        noise = NoiseModel(
            sigma_pos=float(noi.get("sigma_pos", 0.001)),
            sigma_axis=float(noi.get("sigma_axis", 0.0087)),
            seed=seed,
        )

        sol = _section(doc, "solver", {
            "max_iterations", "step_tolerance", "gauss_newton_damping",
            "qp_max_iterations", "gradient_tolerance",
        })
        settings = SolverSettings(
            max_iterations=int(sol.get("max_iterations", 50)),
            step_tolerance=float(sol.get("step_tolerance", 1e-8)),
            gauss_newton_damping=float(sol.get("gauss_newton_damping", 1e-9)),
            qp_max_iterations=int(sol.get("qp_max_iterations", 200)),
            gradient_tolerance=float(sol.get("gradient_tolerance", 1e-10)),
        )

        wsec = _section(doc, "weights", {"values", "smoothing_eps"})
        weights = np.asarray(wsec.get("values", DEFAULT_WEIGHTS), dtype=float)
        smoothing_eps = float(wsec.get("smoothing_eps", 1e-4))

        adm = _section(doc, "admittance", {"gain_alpha", "filter_beta", "force_deadband"})
        return TrialConfig(
            chain=chain,
            limits=limits,
            initial_q=initial_q,
            trocar=trocar,
            geometry=geometry,
            noise=noise,
            solver_settings=settings,
            weights=weights,
            smoothing_eps=smoothing_eps,
            gain_alpha=float(adm.get("gain_alpha", 0.005)),
            filter_beta=float(adm.get("filter_beta", 0.9)),
            force_deadband=float(adm.get("force_deadband", 0.5)),
            ff_enabled=bool(doc.get("ff_enabled", True)),
            dt=dt,
            substep_dt=substep_dt,
            max_duration=max_duration,
            insertion_depth=insertion_depth,
            tracking_time_constant=tracking_tc,
            force_estimate_damping=force_damping,
            seed=seed,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> TrialConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc, base_dir=path.parent)


# ---------------------------------------------------------------------------
# trial execution


@dataclass(frozen=True)
class TrialStep:
    """One control-cycle record."""

    t: float
    q: tuple[float, ...]
    f_ext_norm: float          # true contact force magnitude (N)
    f_est_norm: float          # estimated force magnitude (N)
    costs: tuple[float, ...]   # raw term values c1..c5
    solve_time: float          # seconds, wall clock
    trocar_disp: float         # ring displacement from rest (m)


@dataclass(frozen=True)
class TrialRecord:
    """Full outcome of one docking trial."""

    seed: int
    ff_enabled: bool
    steps: tuple[TrialStep, ...]
    completion_time: float
    success: bool
    metric: float              # normalized force integral (N)
    aborted: bool = False
    abort_cause: str | None = None

    def solve_times(self) -> np.ndarray:
        return np.array([s.solve_time for s in self.steps[1:]]) if len(self.steps) > 1 else np.zeros(0)


def normalized_force_integral(times, force_norms, duration: float) -> float:
    """Time-averaged force norm: trapezoidal integral divided by duration."""
    t = np.asarray(times, dtype=float).reshape(-1)
    f = np.asarray(force_norms, dtype=float).reshape(-1)
    if t.size == 0 or f.size == 0:
        raise ValueError("empty force series")
    if t.size != f.size:
        raise ValueError("times and force norms must align")
    if duration <= 0:
        raise ValueError("duration must be positive")
    return float(np.trapz(f, t) / duration)


def run_trial(config: TrialConfig) -> TrialRecord:
    """Execute one closed-loop docking trial."""
    chain = config.chain
    sim = TrocarSimulation(
        chain=chain,
        limits=config.limits,
        trocar=config.trocar,
        geometry=config.geometry,
        noise=config.noise,
        q0=config.initial_q,
        insertion_depth=config.insertion_depth,
        substep_dt=config.substep_dt,
        tracking_time_constant=config.tracking_time_constant,
    )
    obs = sim.initial_observation()
    q = obs.q_measured
    adm = initial_admittance_state(
        tip_position(chain, q),
        gain_alpha=config.gain_alpha,
        filter_beta=config.filter_beta,
        force_deadband=config.force_deadband,
    )
    est = ForceEstimate(np.zeros(3), 0.0, 0.0)

    def make_params(r):
        anchor = obs.measured_center
        axis = obs.measured_axis
        return TaskParams(
            axis_anchor=anchor,
            insertion_axis=axis,
            goal_point=anchor + config.insertion_depth * axis,
            admittance_ref=r,
            q_prev=q,
            weights=config.weights,
            smoothing_eps=config.smoothing_eps,
        )

    params = make_params(None)
    report = total_objective(q, params, chain)
    steps = [
        TrialStep(
            t=0.0,
            q=tuple(q.tolist()),
            f_ext_norm=obs.true_force_norm,
            f_est_norm=0.0,
            costs=tuple(report.values.tolist()),
            solve_time=0.0,
            trocar_disp=float(np.linalg.norm(obs.trocar_state.center - config.trocar.rest_center)),
        )
    ]
    success = obs.success
    aborted = False
    cause = None
    n_cycles = int(round(config.max_duration / config.dt))
    for _ in range(n_cycles):
        if success:
            break
        try:
            adm = admittance_update(adm, tip_position(chain, q), est, config.dt)
            use_ff = config.ff_enabled and float(np.linalg.norm(adm.deadbanded_force())) > 0.0
            params = make_params(adm.r if use_ff else None)
            bounds = step_bounds(config.limits, q, config.dt)
            out = solve(chain, params, bounds, config.solver_settings)
            obs = sim.step(out.q_star, config.dt)
            q = obs.q_measured
            est = estimate_tip_force(
                chain, q, obs.external_torques, config.force_estimate_damping
            )
            report = total_objective(q, params, chain)
        except (ValueError, np.linalg.LinAlgError) as exc:
            aborted = True
            cause = str(exc)
            break
        steps.append(
            TrialStep(
                t=obs.time,
                q=tuple(q.tolist()),
                f_ext_norm=obs.true_force_norm,
                f_est_norm=float(np.linalg.norm(est.f_ext)),
                costs=tuple(report.values.tolist()),
                solve_time=out.solve_time,
                trocar_disp=float(
                    np.linalg.norm(obs.trocar_state.center - config.trocar.rest_center)
                ),
            )
        )
        success = obs.success
    completion_time = steps[-1].t if steps[-1].t > 0 else 0.0
    if success:
        duration = completion_time
    else:
        duration = completion_time if completion_time > 0 else config.dt
    if len(steps) >= 2:
        metric = normalized_force_integral(
            [s.t for s in steps], [s.f_ext_norm for s in steps], duration
        )
    else:
        metric = 0.0
    return TrialRecord(
        seed=config.seed,
        ff_enabled=config.ff_enabled,
        steps=tuple(steps),
        completion_time=completion_time,
        success=success and not aborted,
        metric=metric,
        aborted=aborted,
        abort_cause=cause,
    )


# ---------------------------------------------------------------------------
# bench


@dataclass(frozen=True)
class ArmStats:
    """Metric statistics of one bench arm (force feedback on or off)."""

    m_values: tuple[float, ...]   # metric of each successful trial, seed order
    mean_m: float
    std_m: float                  # sample standard deviation (n-1)
    success_count: int
    trial_count: int


@dataclass(frozen=True)
class BenchSummary:
    without_ff: ArmStats
    with_ff: ArmStats
    ratio_of_means: float         # mean with-FF metric / mean without-FF metric


def _arm_stats(records: list[TrialRecord]) -> ArmStats:
    ms = tuple(r.metric for r in records if r.success)
    mean = float(np.mean(ms)) if ms else float("nan")
    std = float(np.std(ms, ddof=1)) if len(ms) > 1 else 0.0
    return ArmStats(
        m_values=ms,
        mean_m=mean,
        std_m=std,
        success_count=sum(1 for r in records if r.success),
        trial_count=len(records),
    )


def run_bench(config: TrialConfig, seeds) -> tuple[BenchSummary, list[TrialRecord]]:
    """Seed-paired with/without-force-feedback comparison.

    Each seed runs twice (force term off, then on) with identical noise
    streams. Returns the per-arm statistics and all trial records in
    (seed, arm) order.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("bench needs at least one seed")
    records: list[TrialRecord] = []
    for seed in seeds:
        base = config.with_seed(seed)
        records.append(run_trial(base.with_ff(False)))
        records.append(run_trial(base.with_ff(True)))
    without = _arm_stats([r for r in records if not r.ff_enabled])
    with_ff = _arm_stats([r for r in records if r.ff_enabled])
    ratio = (
        with_ff.mean_m / without.mean_m
        if without.success_count and with_ff.success_count and without.mean_m > 0
        else float("nan")
    )
    return BenchSummary(without_ff=without, with_ff=with_ff, ratio_of_means=ratio), records


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    """Shortest exact decimal form; round-trips through float()."""
    return repr(float(x))


def write_trial_jsonl(record: TrialRecord, path) -> None:
    """One meta line followed by one JSON object per control step."""
    meta = {
        "meta": {
            "seed": record.seed,
            "ff": record.ff_enabled,
            "success": record.success,
            "completion_time_s": record.completion_time,
            "metric_m_n": record.metric,
            "aborted": record.aborted,
            "abort_cause": record.abort_cause,
        }
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(meta) + "\n")
        for s in record.steps:
            row = {
                "t": s.t,
                "q": list(s.q),
                "f_ext_norm": s.f_ext_norm,
                "f_est_norm": s.f_est_norm,
                "costs": list(s.costs),
                "solve_time_s": s.solve_time,
                "trocar_disp_m": s.trocar_disp,
            }
            fh.write(json.dumps(row) + "\n")


def read_trial_jsonl(path) -> TrialRecord:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or "meta" not in lines[0]:
        raise ValueError("not a trial record file")
    meta = lines[0]["meta"]
    steps = tuple(
        TrialStep(
            t=row["t"],
            q=tuple(row["q"]),
            f_ext_norm=row["f_ext_norm"],
            f_est_norm=row["f_est_norm"],
            costs=tuple(row["costs"]),
            solve_time=row["solve_time_s"],
            trocar_disp=row["trocar_disp_m"],
        )
        for row in lines[1:]
    )
    return TrialRecord(
        seed=meta["seed"],
        ff_enabled=meta["ff"],
        steps=steps,
        completion_time=meta["completion_time_s"],
        success=meta["success"],
        metric=meta["metric_m_n"],
        aborted=meta["aborted"],
        abort_cause=meta["abort_cause"],
    )


def trial_filename(record: TrialRecord) -> str:
    return f"trial_{record.seed}_{'ff' if record.ff_enabled else 'noff'}.jsonl"


def write_summary_csv(records: list[TrialRecord], path) -> None:
    """Deterministic per-trial results: seed, arm, success, time, metric."""
    with open(path, "w", newline="") as fh:
        fh.write("seed,ff,success,T_s,M_N\n")
        for r in records:
            fh.write(
                f"{r.seed},{'on' if r.ff_enabled else 'off'},"
                f"{'true' if r.success else 'false'},{_fmt(r.completion_time)},{_fmt(r.metric)}\n"
            )


def write_timings_csv(records: list[TrialRecord], path) -> None:
    """Wall-clock solver timing per trial (not byte-reproducible)."""
    with open(path, "w", newline="") as fh:
        fh.write("seed,ff,mean_solve_ms,median_solve_ms,max_solve_ms\n")
        for r in records:
            st = r.solve_times() * 1e3
            if st.size == 0:
                st = np.zeros(1)
            fh.write(
                f"{r.seed},{'on' if r.ff_enabled else 'off'},"
                f"{_fmt(st.mean())},{_fmt(np.median(st))},{_fmt(st.max())}\n"
            )
