"""Figure rendering for the report path.

Every figure is backed by a delimited text file holding the plotted data;
the PNG is a convenience rendering of the same numbers.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_slope_figure(positions, s_profiles: dict, t_profiles: dict, path) -> None:
    """Edge-wake profiles: speed invariant surface vs standard time surface."""
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for label, prof in t_profiles.items():
        axes[0].plot(positions, prof, marker=".", label=label)
    axes[0].set_ylabel("last-event time (norm.)")
    axes[0].set_title("standard time surface")
    axes[0].legend()
    for label, prof in s_profiles.items():
        axes[1].plot(positions, prof, marker=".", label=label)
    axes[1].set_ylabel("activity value")
    axes[1].set_xlabel("x (px)")
    axes[1].set_title("speed invariant time surface")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_surface_comparison(patches: dict, path) -> None:
    """Side-by-side heatmaps of the three local representations."""
    fig, axes = plt.subplots(1, len(patches), figsize=(3 * len(patches), 3.2))
    if len(patches) == 1:
        axes = [axes]
    for ax, (label, patch) in zip(axes, patches.items()):
        im = ax.imshow(patch, cmap="viridis")
        ax.set_title(label, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_roc_figure(thresholds, precision, recall, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.plot(recall, precision, marker="o")
    for th, pr, rc in zip(thresholds, precision, recall):
        ax.annotate(f"{th:.2f}", (rc, pr), fontsize=7, alpha=0.7)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title("detection threshold sweep")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_error_figure(rows, path) -> None:
    """Mean reprojection error vs homography time offset."""
    dt = [r.dt_ms for r in rows]
    err = [r.mean_error_px for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.plot(dt, err, marker="o")
    ax.set_xlabel("dt (ms)")
    ax.set_ylabel("mean reprojection error (px)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_profile(path, positions, values) -> None:
    np.savetxt(path, np.column_stack([positions, values]), fmt="%g", delimiter=",")
