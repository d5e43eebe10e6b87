# PNG views of comparison results and deployments (CSV stays the data format)

from __future__ import annotations
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.ranopt.rates import AllocationPlan  # noqa: E402
from src.ranopt.scenario import NetworkScenario  # noqa: E402

logger = logging.getLogger(__name__)

SCHEME_STYLES = {
    "proposed": {"color": "tab:red", "marker": "o", "label": "Proposed"},
    "pattern": {"color": "tab:blue", "marker": "s", "label": "Pattern, full power"},
    "optassoc": {"color": "tab:green", "marker": "^", "label": "Full reuse, opt. association"},
    "maxrsrp": {"color": "tab:gray", "marker": "v", "label": "Full reuse, max RSRP"},
}


def plot_delay_curves(
    compare_csv: Path, png_path: Path, simulated_csv: Path | None = None
) -> None:
    """Mean packet delay versus traffic, one curve per scheme. Unstable points
    (infinite delay) are left out. Simulated means are drawn dashed."""
    frame = pd.read_csv(compare_csv)
    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    for scheme, rows in frame.groupby("scheme", sort=False):
        style = SCHEME_STYLES.get(scheme, {"label": scheme})
        rows = rows[np.isfinite(rows["mean_delay_s"])].sort_values("traffic")
        ax.plot(rows["traffic"], rows["mean_delay_s"], **style)
    if simulated_csv is not None:
        sim = pd.read_csv(simulated_csv)
        sim = sim.groupby(["scheme", "traffic"], sort=False)["simulated_mean_delay_s"].mean()
        for scheme, series in sim.groupby(level=0, sort=False):
            style = SCHEME_STYLES.get(scheme, {})
            ax.plot(
                series.index.get_level_values("traffic"),
                series.values,
                linestyle="--",
                color=style.get("color"),
                label=f"{style.get('label', scheme)} (simulated)",
            )
    ax.set_xlabel("Traffic per device (packets/s)")
    ax.set_ylabel("Mean packet delay (s)")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    plt.savefig(png_path)
    plt.close(fig)
    logger.info("Wrote delay plot to %s", png_path)


def plot_deployment(
    scenario: NetworkScenario, png_path: Path, plan: AllocationPlan | None = None
) -> None:
    """AP and device positions, with a line for every serving link of the plan."""
    fig, ax = plt.subplots(figsize=(5, 5), dpi=120)
    aps, devices = scenario.ap_positions, scenario.device_positions
    if plan is not None:
        for j, links in plan.serving_links().items():
            for _, i, _ in links:
                ax.plot(
                    [aps[i, 0], devices[j, 0]],
                    [aps[i, 1], devices[j, 1]],
                    color="tab:orange",
                    linewidth=0.6,
                    alpha=0.6,
                )
    ax.scatter(devices[:, 0], devices[:, 1], s=8, color="tab:blue", label="Devices")
    ax.scatter(aps[:, 0], aps[:, 1], s=30, marker="^", color="tab:red", label="APs")
    side = scenario.params.area_side_m
    ax.set_xlim(0, side)
    ax.set_ylim(0, side)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    plt.savefig(png_path)
    plt.close(fig)
    logger.info("Wrote deployment plot to %s", png_path)
