"""Matplotlib figure helpers. Everything renders to SVG without pyplot."""
from __future__ import annotations

import re
from contextlib import contextmanager

import matplotlib
from matplotlib.figure import Figure

GROUP_COLORS = {"G1": "#4c72b0", "G2": "#dd8452", "G3": "#c44e52", "G4": "#55a868"}

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "svg.fonttype": "none",
    # fixed salt keeps generated element ids stable across runs
    "svg.hashsalt": "cxrscore",
    "path.simplify": False,
}


def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", str(name)).strip("_") or "unnamed"


@contextmanager
def style():
    with matplotlib.rc_context(STYLE):
        yield


def save_svg(fig: Figure, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def box_figure(stats, title: str, ylabel: str, ylim=None) -> Figure:
    """One box per group from precomputed statistics.

    ``stats`` maps group value to a GroupStats-like dict. Each box patch is
    tagged with ``gid="box-<group>"``.
    """
    groups = [g for g in ("G1", "G2", "G3", "G4") if g in stats]
    bxp = [{
        "label": f"{g}\n(n={stats[g]['n']})",
        "whislo": stats[g]["whisker_low"], "q1": stats[g]["q1"], "med": stats[g]["median"],
        "q3": stats[g]["q3"], "whishi": stats[g]["whisker_high"], "fliers": stats[g]["outliers"],
    } for g in groups]
    fig = Figure(figsize=(4.0, 3.2))
    ax = fig.add_subplot()
    if bxp:
        art = ax.bxp(bxp, patch_artist=True, showfliers=True)
        for g, box in zip(groups, art["boxes"]):
            box.set_gid(f"box-{g}")
            box.set_facecolor(GROUP_COLORS[g])
            box.set_alpha(0.8)
        for med in art["medians"]:
            med.set_color("black")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if ylim is not None:
        ax.set_ylim(*ylim)
    fig.tight_layout()
    return fig


def timeline_figure(points, title: str, admit=None, release=None) -> Figure:
    """Score against days from hospital admission with a dashed trend line."""
    points = sorted(points)
    fig = Figure(figsize=(4.0, 2.6))
    ax = fig.add_subplot()
    days = [p[0] for p in points]
    scores = [p[1] for p in points]
    ax.plot(days, scores, linestyle="--", color="0.4", zorder=1)
    ax.scatter(days, scores, color="#c44e52", zorder=2, s=18)
    if admit is not None:
        ax.axvline(admit, color="#dd8452", linewidth=0.8, linestyle=":", label="ICU admission")
    if release is not None:
        ax.axvline(release, color="#55a868", linewidth=0.8, linestyle=":", label="ICU release")
    if admit is not None or release is not None:
        ax.legend(frameon=False, fontsize=7)
    ax.set_xlabel("days from hospital admission")
    ax.set_ylabel("severity score")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def confusion_figure(cm: dict, title: str, labels=("not icu", "future icu")) -> Figure:
    grid = [[cm["tn"], cm["fp"]], [cm["fn"], cm["tp"]]]
    fig = Figure(figsize=(3.0, 2.8))
    ax = fig.add_subplot()
    ax.imshow(grid, cmap="Blues", vmin=0)
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(grid[i][j]), ha="center", va="center")
    ax.set_xticks([0, 1], labels=list(labels))
    ax.set_yticks([0, 1], labels=list(labels))
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{title} (accuracy {cm['accuracy']:.2f})")
    fig.tight_layout()
    return fig
