"""Figure rendering for the CLI report paths.

Every command that writes delimited output also drops a PNG next to it;
these helpers take the already-written rows, never recompute anything.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_training_curves(rows: list[dict], path) -> None:
    steps = [r["step"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(steps, [r["loss"] for r in rows], marker="o", ms=3)
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("loss")
    axes[1].plot(steps, [r["theta"] for r in rows], marker="o", ms=3, color="tab:orange")
    axes[1].set_xlabel("step")
    axes[1].set_ylabel(r"blend weight $\theta$")
    axes[1].set_ylim(-0.05, 1.05)
    axes[2].plot(steps, [r["eval_score_normalized"] for r in rows], marker="o",
                 ms=3, color="tab:green")
    axes[2].set_xlabel("step")
    axes[2].set_ylabel("normalized score")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_attention_scaling(rows: list[dict], fits: dict[str, float], path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    modes = sorted({r["mode"] for r in rows})
    for mode in modes:
        sub = sorted((r for r in rows if r["mode"] == mode), key=lambda r: r["n"])
        ns = [r["n"] for r in sub]
        ax1.loglog(ns, [r["total_ops"] for r in sub], marker="o",
                   label=f"{mode} (exp {fits[mode]:.2f})")
        ax2.loglog(ns, [r["wall_time_s"] for r in sub], marker="s", label=mode)
    ax1.set_xlabel("context length N")
    ax1.set_ylabel("op count")
    ax1.legend(fontsize=8)
    ax2.set_xlabel("context length N")
    ax2.set_ylabel("wall time (s)")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_energy_breakdown(report_dict: dict, path) -> None:
    lines = report_dict["lines"]
    names = [l["layer"] for l in lines]
    vals = [l["energy_uj"] for l in lines]
    colors = ["tab:red" if l["kind"] == "MAC" else "tab:blue" for l in lines]
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(lines) + 1.6))
    ax.barh(range(len(lines)), vals, color=colors)
    ax.set_yticks(range(len(lines)), names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("energy (uJ)")
    ax.set_title(
        f"total {report_dict['total_uj']:.4f} uJ, "
        f"attention core {report_dict['attention_core_uj']:.4f} uJ",
        fontsize=9,
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_heatmap(rows: list[dict], path) -> None:
    ts = sorted({r["snn_timesteps"] for r in rows})
    ss = sorted({r["window"] for r in rows})
    grid = np.full((len(ts), len(ss)), np.nan)
    for r in rows:
        if r.get("normalized_score") is not None:
            grid[ts.index(r["snn_timesteps"]), ss.index(r["window"])] = r[
                "normalized_score"
            ]
    fig, ax = plt.subplots(figsize=(1.2 * len(ss) + 2, 1.0 * len(ts) + 1.5))
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(ss)), [str(s) for s in ss])
    ax.set_yticks(range(len(ts)), [str(t) for t in ts])
    ax.set_xlabel("window S")
    ax.set_ylabel("timesteps T")
    for i in range(len(ts)):
        for j in range(len(ss)):
            if np.isfinite(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.0f}", ha="center", va="center",
                        color="white", fontsize=9)
    fig.colorbar(im, ax=ax, label="normalized score")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_eval_episodes(raw_scores: list[float], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(range(len(raw_scores)), raw_scores, color="tab:purple")
    ax.set_xlabel("episode")
    ax.set_ylabel("raw return")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
