"""Command-line entry points: run one trial, run the bench, self-check.

Exit codes: 0 on success, 1 on failed self-check, 2 on configuration
errors, 3 when a trial aborted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import ConfigError, TrialConfig
from .kinematics import linear_jacobian, tip_position
from .force_pipeline import estimate_tip_force
from .solver import BoxBounds, solve_box_qp
from .task_model import TaskParams, evaluate_cost


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad seed list '{text}'") from exc


def cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.ff is not None:
        config = config.with_ff(args.ff == "on")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = harness.run_trial(config)
    path = out_dir / harness.trial_filename(record)
    harness.write_trial_jsonl(record, path)
    if not args.no_plots:
        from . import plots

        plots.render_trial_figure(record, path.with_suffix(".png"))
    status = "success" if record.success else ("ABORTED" if record.aborted else "timeout")
    print(
        f"seed {record.seed} ff={'on' if record.ff_enabled else 'off'}: {status}, "
        f"T = {record.completion_time:.3f} s, M = {record.metric:.4f} N -> {path}"
    )
    if record.aborted:
        print(f"abort cause: {record.abort_cause}", file=sys.stderr)
        return 3
    return 0


def cmd_bench(args) -> int:
    config = harness.load_config(args.config)
    if args.seeds is not None:
        seeds = _parse_seeds(args.seeds)
        if args.trials is not None and args.trials != len(seeds):
            raise ConfigError("--trials disagrees with the number of --seeds")
    else:
        n = args.trials if args.trials is not None else 5
        if n < 1:
            raise ConfigError("--trials must be >= 1")
        seeds = list(range(1, n + 1))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, records = harness.run_bench(config, seeds)
    for record in records:
        harness.write_trial_jsonl(record, out_dir / harness.trial_filename(record))
    harness.write_summary_csv(records, out_dir / "summary.csv")
    harness.write_timings_csv(records, out_dir / "timings.csv")
    if not args.no_plots:
        from . import plots

        plots.render_force_comparison(records, out_dir / "force_comparison.png")
        plots.render_metric_summary(summary, out_dir / "metric_summary.png")
    for arm, stats in (("without FF", summary.without_ff), ("with FF", summary.with_ff)):
        print(
            f"{arm}: {stats.success_count}/{stats.trial_count} succeeded, "
            f"M = {stats.mean_m:.4f} +/- {stats.std_m:.4f} N"
        )
    print(f"mean-metric ratio (with/without FF): {summary.ratio_of_means:.4f}")
    print(f"wrote {out_dir / 'summary.csv'}")
    if any(r.aborted for r in records):
        print("one or more trials aborted", file=sys.stderr)
        return 3
    return 0


def _self_checks(config: TrialConfig):
    """Gradient/Jacobian/QP/force spot checks on the configured chain."""
    rng = np.random.default_rng(0)
    chain = config.chain
    n = chain.n
    span = config.limits.q_max - config.limits.q_min
    h = 1e-6

    def random_q():
        return config.limits.q_min + rng.uniform(0.1, 0.9, n) * span

    checks = []

    worst = 0.0
    for _ in range(20):
        q = random_q()
        tip = tip_position(chain, q)
        jac = linear_jacobian(chain, q, tip)
        fd = np.empty((3, n))
        for j in range(n):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            fd[:, j] = (tip_position(chain, qp) - tip_position(chain, qm)) / (2 * h)
        worst = max(worst, np.abs(jac - fd).max() / max(1.0, np.abs(jac).max()))
    checks.append(("tip jacobian vs finite differences", worst < 1e-6, f"rel err {worst:.2e}"))

    center = tip_position(chain, config.initial_q) + np.array([0.02, -0.01, 0.03])
    axis = np.array([0.0, 0.0, 1.0])
    worst = 0.0
    for _ in range(10):
        q = random_q()
        params = TaskParams(
            axis_anchor=center,
            insertion_axis=axis,
            goal_point=center + 0.02 * axis,
            admittance_ref=center + np.array([0.001, 0.0, 0.0]),
            q_prev=random_q(),
            weights=config.weights,
            smoothing_eps=config.smoothing_eps,
        )
        for term in range(1, 6):
            _, grad = evaluate_cost(term, q, params, chain)
            fd = np.empty(n)
            for j in range(n):
                qp, qm = q.copy(), q.copy()
                qp[j] += h
                qm[j] -= h
                fd[j] = (
                    evaluate_cost(term, qp, params, chain)[0]
                    - evaluate_cost(term, qm, params, chain)[0]
                ) / (2 * h)
            scale = max(1.0, np.abs(grad).max())
            worst = max(worst, np.abs(grad - fd).max() / scale)
    checks.append(("cost gradients vs finite differences", worst < 1e-5, f"rel err {worst:.2e}"))

    worst = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 8))
        basis, _ = np.linalg.qr(rng.normal(size=(m, m)))
        hess = basis @ np.diag(np.exp(rng.uniform(-2, 2, m))) @ basis.T
        lin = rng.normal(size=m)
        lo = rng.uniform(-2.0, -0.1, m)
        hi = rng.uniform(0.1, 2.0, m)
        bounds = BoxBounds(lo, hi)
        x = solve_box_qp(hess, lin, bounds, np.zeros(m))
        pg = x - np.clip(x - (hess @ x + lin), lo, hi)
        worst = max(worst, np.abs(pg).max())
    checks.append(("box-QP stationarity", worst < 1e-8, f"KKT residual {worst:.2e}"))

    worst = 0.0
    for _ in range(10):
        q = random_q()
        jac = linear_jacobian(chain, q, tip_position(chain, q))
        if np.linalg.svd(jac, compute_uv=False)[-1] < 1e-3:
            continue
        f = rng.normal(size=3)
        est = estimate_tip_force(chain, q, jac.T @ f, damping=0.0)
        worst = max(worst, float(np.linalg.norm(est.f_ext - f)))
    checks.append(("force estimate round trip", worst < 1e-8, f"abs err {worst:.2e}"))
    return checks


def cmd_check(args) -> int:
    config = harness.load_config(args.config)
    failures = 0
    for name, ok, detail in _self_checks(config):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trocar-dock",
        description="Endoscope/trocar docking trials and force-feedback benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one docking trial")
    p_run.add_argument("--config", required=True, help="trial config JSON")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--ff", choices=("on", "off"), default=None, help="force feedback override")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="paired with/without-FF benchmark")
    p_bench.add_argument("--config", required=True, help="trial config JSON")
    p_bench.add_argument("--trials", type=int, default=None, help="number of seed pairs")
    p_bench.add_argument("--seeds", default=None, help="comma-separated seed list")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p_bench.set_defaults(func=cmd_bench)

    p_check = sub.add_parser("check", help="gradient/Jacobian/QP self-tests")
    p_check.add_argument("--config", required=True, help="trial config JSON")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
