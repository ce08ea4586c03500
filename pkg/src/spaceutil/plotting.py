"""Matplotlib figures for reports.

All output goes through :func:`save_figure`, which strips timestamps and pins
the SVG id salt so repeated runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import colors as mcolors  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

MISSING_COLOR = "#bfbfbf"
RAMP = "coolwarm"  # blue -> red

plt.rcParams.update({
    "svg.hashsalt": "spaceutil",
    "svg.fonttype": "path",
    "font.size": 8,
    "axes.titlesize": 9,
})


def utilization_color(value: float, vmax: float = 0.5) -> str:
    """Hex colour for a utilization value; values >= vmax saturate to red."""
    if value is None or np.isnan(value):
        return MISSING_COLOR
    frac = float(np.clip(value / vmax, 0.0, 1.0))
    return mcolors.to_hex(matplotlib.colormaps[RAMP](frac))


def heatmap_figure(heatmap, vmax: float = 0.5):
    from .fusion import DAY_NAMES

    fig, ax = plt.subplots(figsize=(9, 3))
    for d in range(7):
        for h in range(24):
            ax.add_patch(Rectangle((h, 6 - d), 1, 1, facecolor=utilization_color(heatmap.mean[d, h], vmax),
                                   edgecolor="white", linewidth=0.5))
    ax.set_xlim(0, 24)
    ax.set_ylim(0, 7)
    ax.set_xticks(np.arange(24) + 0.5, [f"{h:02d}" for h in range(24)])
    ax.set_yticks(np.arange(7) + 0.5, list(reversed(DAY_NAMES)))
    ax.set_xlabel("local hour")
    ax.set_title(f"{heatmap.node_uid} utilization ({heatmap.selector})")
    mappable = plt.cm.ScalarMappable(norm=mcolors.Normalize(0, vmax), cmap=RAMP)
    fig.colorbar(mappable, ax=ax, fraction=0.03, pad=0.02)
    fig.tight_layout()
    return fig


def deduction_figure(table):
    """Per-bin false-alarm means, the boosted fit and the resulting steps."""
    edges = np.array(table.lambda_low + [table.lambda_high[-1]])
    centers = (edges[:-1] + edges[1:]) / 2
    fig, ax = plt.subplots(figsize=(4.5, 3))
    means = np.array([np.nan if m is None else m for m in table.bin_means], dtype=float) \
        if table.bin_means else np.full(len(centers), np.nan)
    ax.plot(centers, means, "o", color="tab:red", label="mean false-alarm motion")
    grid = np.linspace(0, 1, 101)
    ax.plot(grid, np.polyval(table.fitted, grid), "--", color="tab:gray", label="cubic fit (x1.5)")
    ax.stairs(table.d, edges, color="tab:blue", label="deduction")
    ax.set_xlabel("aggregated likelihood")
    ax.set_ylabel("motion count")
    ax.legend(loc="upper left")
    fig.tight_layout()
    return fig


def calibration_figure(window_start, raw, calibrated, p_alpha, title: str = ""):
    hours = (np.asarray(window_start) - window_start[0]) / 3_600_000
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 4), sharex=True)
    ax1.plot(hours, raw, color="tab:red", lw=0.8, label="raw")
    ax1.plot(hours, calibrated, color="tab:blue", lw=0.8, label="calibrated")
    ax1.set_ylabel("motion")
    ax1.legend(loc="upper right")
    ax1.set_title(title)
    ax2.plot(hours, p_alpha, color="tab:orange", lw=0.8)
    ax2.set_ylabel("likelihood")
    ax2.set_xlabel("hours")
    fig.tight_layout()
    return fig


def save_figure(fig, path: str | Path) -> Path:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    metadata = {"Date": None} if fmt == "svg" else {"Software": None} if fmt == "png" else None
    try:
        fig.savefig(path, format=fmt, metadata=metadata)
    finally:
        plt.close(fig)
    return path
