"""Figure rendering for maps and bench results.

Everything goes through the Agg backend straight to files; figures sit
next to the delimited outputs they visualize and carry no extra state.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap
from matplotlib.patches import Patch

from .reachability import ReachabilityMap

_STATUS_COLORS = ["#22223b", "#e9a84c", "#43aa59"]
_STATUS_LABELS = ["unreachable", "contact only", "graspable"]
_ASM_COLORS = {"random": "#999999", "lazy": "#e9a84c", "greedy": "#43aa59"}


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def render_reach_map(rmap: ReachabilityMap, path, title: str = "") -> Path:
    g = rmap.grid
    fig, ax = plt.subplots(figsize=(6.0, 6.0 * (g.y_max - g.y_min)
                                    / (g.x_max - g.x_min)))
    ax.imshow(rmap.status, origin="lower", cmap=ListedColormap(_STATUS_COLORS),
              vmin=0, vmax=2, extent=(g.x_min, g.x_max, g.y_min, g.y_max),
              interpolation="nearest")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(handles=[Patch(color=c, label=l)
                       for c, l in zip(_STATUS_COLORS, _STATUS_LABELS)],
              loc="upper right", fontsize=8, framealpha=0.9)
    return _finish(fig, path)


def _cell_labels(cells) -> list[str]:
    return [f"{c.scenario}\n{c.failure}" for c in cells]


def render_success_rates(result, path) -> Path:
    """Grouped bars, one group per (scenario, failure), one bar per mode."""
    asms = list(result.suite.asms)
    groups = [(s, f) for s in result.suite.scenarios
              for f in result.suite.failures]
    by_key = {(c.scenario, c.failure, c.asm): c for c in result.cells}
    x = np.arange(len(groups))
    width = 0.8 / len(asms)
    fig, ax = plt.subplots(figsize=(1.1 * len(groups) + 2, 4))
    for i, a in enumerate(asms):
        rates = [by_key[(s, f, a)].success_rate for s, f in groups]
        ax.bar(x + (i - (len(asms) - 1) / 2) * width, rates, width,
               label=a, color=_ASM_COLORS.get(a))
    ax.set_xticks(x)
    ax.set_xticklabels([f"{s}\n{f}" for s, f in groups], fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("success rate")
    ax.legend(fontsize=8)
    ax.set_title(f"success over {result.suite.trials} trials per cell")
    return _finish(fig, path)


def render_action_histograms(result, path) -> Path:
    """One panel per (scenario, failure); per-mode action-count histograms."""
    maxa = result.suite.max_actions
    scenarios = result.suite.scenarios
    failures = result.suite.failures
    by_key = {(c.scenario, c.failure, c.asm): c for c in result.cells}
    fig, axes = plt.subplots(len(scenarios), len(failures),
                             figsize=(3.2 * len(failures),
                                      2.6 * len(scenarios)),
                             squeeze=False, sharex=True)
    for i, s in enumerate(scenarios):
        for j, f in enumerate(failures):
            ax = axes[i][j]
            for a in result.suite.asms:
                counts = by_key[(s, f, a)].histogram(maxa)
                ax.step(range(maxa + 1), counts, where="mid", label=a,
                        color=_ASM_COLORS.get(a))
            ax.set_title(f"{s} / {f}", fontsize=9)
            if i == len(scenarios) - 1:
                ax.set_xlabel("actions")
            if j == 0:
                ax.set_ylabel("trials")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)


def render_time_summary(result, path) -> Path:
    """Mean planning and execution time per cell, stacked."""
    cells = result.cells
    x = np.arange(len(cells))
    plan_t = [c.mean_planning_time for c in cells]
    exec_t = [c.mean_execution_time for c in cells]
    fig, ax = plt.subplots(figsize=(0.45 * len(cells) + 2, 4))
    ax.bar(x, plan_t, label="planning", color="#5d7599")
    ax.bar(x, exec_t, bottom=plan_t, label="execution", color="#c46a4f")
    ax.set_xticks(x)
    ax.set_xticklabels([f"{c.scenario[:7]}/{c.failure}/{c.asm[:4]}"
                        for c in cells], rotation=90, fontsize=7)
    ax.set_ylabel("mean modeled time per trial [s]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)


def render_bench_figures(result, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "success_rates": render_success_rates(result,
                                              out / "success_rates.png"),
        "actions_hist": render_action_histograms(result,
                                                 out / "actions_hist.png"),
        "time_summary": render_time_summary(result, out / "time_summary.png"),
    }
    for (chain_name, _table, fname), rmap in result.maps.items():
        p = out / f"reach_{chain_name}_{fname}.png"
        paths[f"reach_{chain_name}_{fname}"] = render_reach_map(
            rmap, p, title=f"{chain_name}, failure case {fname}")
    return paths
