"""Report rendering: summary tables plus matplotlib figures.

Consumes the experiment CSV (and optionally a plan or fitted profiles)
and writes PNG figures next to the delimited summary output.
"""

from __future__ import annotations

import csv
import io
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import AllocationPlan, ConfigPair, ConfigSpace, atomic_write_text
from .profiler import ProfileModel, eval_quality, eval_size
from .simharness import SUMMARY_COLUMNS

_SOLVER_COLORS = {
    "dp": "#1f77b4",
    "fairness": "#ff7f0e",
    "greedy": "#2ca02c",
    "oracle": "#9467bd",
}


def _color(solver: str) -> str:
    return _SOLVER_COLORS.get(solver, "#7f7f7f")


def write_summary_csv(path: str, rows: "list[list[str]]") -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def render_results_figures(rows: "list[dict]", out_dir: str) -> list[str]:
    """Render regret and quality figures from results.csv rows.

    Returns the list of files written.
    """
    os.makedirs(out_dir, exist_ok=True)
    feasible = [r for r in rows if r["feasible"] == "true"]
    solvers = sorted({r["solver"] for r in rows})
    written: list[str] = []

    regrets = {
        s: [float(r["regret_vs_oracle"]) for r in feasible if r["solver"] == s and r["regret_vs_oracle"] != ""]
        for s in solvers
    }
    if any(regrets.values()):
        fig, ax = plt.subplots(figsize=(6, 4))
        names = [s for s in solvers if regrets[s]]
        means = [np.mean(regrets[s]) for s in names]
        maxes = [np.max(regrets[s]) for s in names]
        x = np.arange(len(names))
        ax.bar(x, means, color=[_color(s) for s in names], label="mean")
        ax.plot(x, maxes, "kv", markersize=7, label="max")
        ax.set_xticks(x)
        ax.set_xticklabels(names)
        ax.set_ylabel("regret vs true optimum (quality)")
        ax.set_title("Planner regret")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, "regret_by_solver.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    scene_ids = sorted({r["scene_id"] for r in feasible})
    if scene_ids:
        fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(scene_ids)), 4))
        for s in solvers:
            qualities = []
            for scene in scene_ids:
                vals = [
                    float(r["total_true_quality"])
                    for r in feasible
                    if r["scene_id"] == scene and r["solver"] == s and r["total_true_quality"] != ""
                ]
                qualities.append(vals[0] if vals else np.nan)
            ax.plot(range(len(scene_ids)), qualities, "o-", label=s, color=_color(s), alpha=0.8)
        ax.set_xticks(range(len(scene_ids)))
        ax.set_xticklabels(scene_ids, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("total true quality")
        ax.set_title("Achieved quality per scene")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, "quality_by_scene.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written


def render_plan_figure(plan: AllocationPlan, out_dir: str) -> str:
    """Per-object size allocation bar chart for one plan."""
    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(plan.entries)), 4))
    names = [e.object_id for e in plan.entries]
    sizes = [e.predicted_size_mb for e in plan.entries]
    bars = ax.bar(names, sizes, color=_color(plan.solver))
    for bar, entry in zip(bars, plan.entries):
        ax.annotate(
            f"({entry.config.g},{entry.config.p})",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center", va="bottom", fontsize=7,
        )
    ax.axhline(plan.budget_mb / max(1, len(plan.entries)), ls="--", c="gray", lw=1,
               label="fair share")
    ax.set_ylabel("predicted size (MB)")
    ax.set_title(
        f"{plan.solver} allocation: {plan.total_size_mb:.1f} / {plan.budget_mb:.0f} MB, "
        f"quality {plan.total_quality:.3f}"
    )
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "allocation.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_profile_figures(
    profiles: "list[tuple[ProfileModel, ConfigSpace]]",
    out_dir: str,
    samples_by_object: "dict[str, list] | None" = None,
) -> list[str]:
    """Fitted size/quality curves vs mesh granularity at the largest patch size."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for model, space in profiles:
        p_fixed = max(space.p_values)
        gs = list(space.g_values)
        sizes = [eval_size(model.size, ConfigPair(g, p_fixed)) for g in gs]
        quals = [eval_quality(model.quality, ConfigPair(g, p_fixed)) for g in gs]

        fig, (ax_q, ax_s) = plt.subplots(1, 2, figsize=(9, 3.6))
        ax_q.plot(gs, quals, "o-", color="#1f77b4")
        ax_q.set_xlabel("mesh granularity g")
        ax_q.set_ylabel("predicted quality")
        ax_s.plot(gs, sizes, "o-", color="#d62728")
        ax_s.set_xlabel("mesh granularity g")
        ax_s.set_ylabel("predicted size (MB)")
        if samples_by_object and model.object_id in samples_by_object:
            obs = [s for s in samples_by_object[model.object_id] if s.config.p == p_fixed]
            ax_q.plot([s.config.g for s in obs], [s.quality for s in obs], "kx", label="samples")
            ax_s.plot([s.config.g for s in obs], [s.size_mb for s in obs], "kx", label="samples")
            ax_q.legend()
            ax_s.legend()
        fig.suptitle(f"{model.object_id} (p = {p_fixed}), "
                     f"fit RMSE: {model.fit_stats.rmse_quality:.2g} / "
                     f"{model.fit_stats.rmse_size_mb:.2g} MB")
        fig.tight_layout()
        path = os.path.join(out_dir, f"profile_{model.object_id}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
