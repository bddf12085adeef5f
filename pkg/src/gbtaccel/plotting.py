"""Report figures. Uses the Agg backend and strips PNG metadata so reruns are byte-identical."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
STEP_COLORS = {"step1": "#4c72b0", "step2_host": "#dd8452", "step3": "#55a868",
               "step5": "#c44e52", "inference": "#8172b3"}

RC = {
    "font.size": 9,
    "font.family": "sans-serif",
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "gbtaccel",
}


def _figure(width: float = 5.0):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN))
    return fig, ax


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_speedup(rows: list[dict], path: Path, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, ax = _figure()
        rows = [r for r in rows if r["feasible"]]
        names = [r["platform"] for r in rows]
        ax.bar(names, [r["speedup"] for r in rows], color="#4c72b0")
        ax.axhline(1.0, color="0.4", lw=0.8, ls="--")
        ax.set_ylabel("speedup over ideal32")
        ax.set_title(title)
        return _save(fig, path)


def plot_breakdown(rows: list[dict], path: Path, title: str = "") -> Path:
    """Stacked per-step time, normalized to the ideal32 total when present."""
    with plt.rc_context(RC):
        fig, ax = _figure()
        platforms = list(dict.fromkeys(r["platform"] for r in rows))
        totals = {p: sum(r["time_ns"] for r in rows if r["platform"] == p) for p in platforms}
        ref = totals.get("ideal32") or max(totals.values()) or 1.0
        bottom = [0.0] * len(platforms)
        for step, color in STEP_COLORS.items():
            h = [sum(r["time_ns"] for r in rows if r["platform"] == p and r["step"] == step) / ref
                 for p in platforms]
            if not any(h):
                continue
            ax.bar(platforms, h, bottom=bottom, color=color, label=step)
            bottom = [b + x for b, x in zip(bottom, h)]
        ax.set_ylabel("time (ideal32 = 1)")
        ax.set_title(title)
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_energy(rows: list[dict], path: Path, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(6.0, 6.0 * GOLDEN / 1.4))
        names = [r["platform"] for r in rows]
        for ax, key in zip(axes, ("sram_energy", "dram_energy")):
            ax.bar(names, [r[key] for r in rows], color="#55a868")
            ax.set_title(key.replace("_", " "))
            ax.tick_params(axis="x", labelrotation=30)
        axes[0].set_ylabel("normalized to ideal32")
        if title:
            fig.suptitle(title)
        return _save(fig, path)
