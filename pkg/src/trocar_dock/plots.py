"""Figure rendering for trial and bench reports.

Figures are written next to the delimited output files: a per-trial
diagnostic sheet, and for benches the force-over-time comparison between
the with/without-force-feedback arms plus a metric summary.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import BenchSummary, TrialRecord


def _arm_label(ff: bool) -> str:
    return "with FF" if ff else "without FF"


def render_trial_figure(record: TrialRecord, path) -> Path:
    """Three-panel trial sheet: forces, trocar displacement, solve time."""
    t = np.array([s.t for s in record.steps])
    f_true = np.array([s.f_ext_norm for s in record.steps])
    f_est = np.array([s.f_est_norm for s in record.steps])
    disp = np.array([s.trocar_disp for s in record.steps]) * 1e3
    solve_ms = np.array([s.solve_time for s in record.steps]) * 1e3

    fig, axes = plt.subplots(3, 1, figsize=(7.0, 7.5), sharex=True, constrained_layout=True)
    axes[0].plot(t, f_true, lw=1.0, label="measured on scope")
    axes[0].plot(t, f_est, lw=0.8, ls="--", label="estimated from torques")
    axes[0].set_ylabel("|f_ext| (N)")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].plot(t, disp, lw=1.0, color="tab:orange")
    axes[1].set_ylabel("trocar displacement (mm)")
    axes[2].plot(t, solve_ms, lw=0.8, color="tab:green")
    axes[2].set_ylabel("solve time (ms)")
    axes[2].set_xlabel("time (s)")
    status = "success" if record.success else ("aborted" if record.aborted else "timeout")
    axes[0].set_title(
        f"seed {record.seed}, {_arm_label(record.ff_enabled)}: {status}, "
        f"T = {record.completion_time:.2f} s, M = {record.metric:.3f} N"
    )
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_force_comparison(records: list[TrialRecord], path) -> Path:
    """Per-arm overlay of contact-force traces, one color per trial."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True, constrained_layout=True)
    cmap = plt.get_cmap("tab10")
    for ax, ff in zip(axes, (False, True)):
        arm = [r for r in records if r.ff_enabled == ff]
        for i, rec in enumerate(arm):
            t = [s.t for s in rec.steps]
            f = [s.f_ext_norm for s in rec.steps]
            ax.plot(t, f, lw=0.9, color=cmap(i % 10), label=f"seed {rec.seed}")
        ax.set_title(_arm_label(ff))
        ax.set_xlabel("time (s)")
        if arm:
            ax.legend(fontsize=7, loc="upper right")
    axes[0].set_ylabel("|f_ext| (N)")
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_metric_summary(summary: BenchSummary, path) -> Path:
    """Dot plot of the per-trial normalized force integral for both arms."""
    fig, ax = plt.subplots(figsize=(4.2, 3.6), constrained_layout=True)
    for x, (label, stats) in enumerate(
        [("without FF", summary.without_ff), ("with FF", summary.with_ff)]
    ):
        values = np.asarray(stats.m_values)
        if values.size:
            ax.plot(np.full(values.size, x), values, "o", ms=5, alpha=0.7)
            ax.errorbar(
                [x], [stats.mean_m], yerr=[stats.std_m], fmt="_", ms=18,
                color="black", capsize=6, lw=1.2,
            )
    ax.set_xticks([0, 1], ["without FF", "with FF"])
    ax.set_xlim(-0.5, 1.5)
    ax.set_ylabel("normalized force integral M (N)")
    if np.isfinite(summary.ratio_of_means):
        ax.set_title(f"mean ratio (with/without) = {summary.ratio_of_means:.2f}")
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
