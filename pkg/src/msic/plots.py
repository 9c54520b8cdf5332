"""Report figures rendered next to the delimited outputs.

matplotlib is imported lazily with the Agg backend so the core library
never touches a display.
"""

from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_replication_mse(raw, methods, out_path):
    """Boxplot of per-replication grid MSE by method."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    data, labels = [], []
    for method in methods:
        vals = [r["mse"] for r in raw if r["method"] == method and r["error"] == ""]
        if vals:
            data.append(vals)
            labels.append(method)
    if data:
        ax.boxplot(data, tick_labels=labels)
    ax.set_ylabel("grid MSE of the cure probability")
    ax.set_title("Replication study")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_bandwidth_sensitivity(rows, out_path):
    """Mean grid MSE against the bandwidth multiplier."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ms = [r["multiplier"] for r in rows]
    mses = [r["mse_mean"] for r in rows]
    ax.plot(ms, mses, marker="o")
    ax.set_xlabel("bandwidth multiplier m")
    ax.set_ylabel("mean grid MSE")
    ax.set_title("Bandwidth sensitivity")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_fitted_link(model, out_path):
    """Step and smoothed link of a fitted monotone model."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    link = model.link
    base = getattr(link, "base", None)
    if base is not None:
        knots = base.knots
        pad = link.bandwidth
        grid = np.linspace(knots[0] - pad, knots[-1] + pad, 400)
        ax.step(knots, base.values, where="pre", alpha=0.5, label="isotonic step")
        ax.plot(grid, link.evaluate(grid), label="smoothed")
    else:
        grid = np.linspace(-4, 4, 400)
        ax.plot(grid, link.evaluate(grid), label="parametric")
    ax.set_xlabel("index")
    ax.set_ylabel("uncure probability")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
