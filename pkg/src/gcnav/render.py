"""Matplotlib figures for episode results.

SVG output is byte-stable: the hash salt is fixed and no date is embedded.
Artists carry ``gid`` values so the SVG can be inspected by element id.
"""
from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from .harness import EpisodeResult, spl_term  # noqa: E402
from .world import World  # noqa: E402

STYLE = {
    "svg.hashsalt": "gcnav",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.linewidth": 0.8,
}

FORWARD = dict(color="#1f5fa8", lw=1.8, ls="-")
RETURN = dict(color="#d1495b", lw=1.4, ls="--")


def _segments(traj):
    """Split the pose list into runs of equal backtrack flag."""
    runs = []
    for a, b in zip(traj, traj[1:]):
        flag = bool(b["backtrack"])
        if not runs or runs[-1][0] != flag:
            runs.append((flag, [(a["x"], a["y"])]))
        runs[-1][1].append((b["x"], b["y"]))
    return runs


def render_trajectory(w: World, r: EpisodeResult, out: str) -> str:
    if not r.trajectory:
        raise ValueError("result has no poses to draw")
    with plt.rc_context(STYLE):
        x0, y0, x1, y1 = w.bounds
        fig, ax = plt.subplots(figsize=(6, 6 * (y1 - y0) / max(x1 - x0, 1e-9) + 0.6))
        ax.imshow(
            w.occupied,
            origin="lower",
            extent=(x0, x1, y0, y1),
            cmap="Greys",
            vmin=0,
            vmax=1.6,
            interpolation="nearest",
            gid="occupancy",
        )
        ax.add_patch(
            Circle(r.goal, r.success_radius_m, facecolor="#2a9d8f", alpha=0.18, edgecolor="#2a9d8f", gid="goal-disc")
        )
        for i, obj in enumerate(w.objects):
            ax.plot(obj.x, obj.y, marker="s", ms=5, color="#e9a03b", gid=f"object-{i}")
            ax.annotate(obj.label, (obj.x, obj.y), xytext=(3, 3), textcoords="offset points", fontsize=7)
        for i, (flag, pts) in enumerate(_segments(r.trajectory)):
            xs, ys = zip(*pts)
            style = RETURN if flag else FORWARD
            ax.plot(xs, ys, gid=f"{'backtrack' if flag else 'trajectory'}-{i}", **style)
        if r.waypoints:
            xs, ys = zip(*r.waypoints)
            ax.plot(xs, ys, ls="none", marker="o", ms=4, color="black", gid="waypoints")
        start = r.trajectory[0]
        ax.plot(start["x"], start["y"], marker="^", ms=7, color="black", gid="start")
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        verdict = "success" if r.success else f"fail ({r.reason or 'off goal'})"
        ax.set_title(f"{r.world}/{r.episode_id}: {verdict}, NE {r.ne_m:.2f} m, SPL {spl_term(r):.2f}")
        fig.tight_layout()
        os.makedirs(os.path.dirname(os.path.abspath(out)) or ".", exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out


def render_summary(results: Sequence[EpisodeResult], out: str) -> str:
    """Bar chart of per-episode navigation error with the success radius marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.32 * len(results) + 1.5), 3.2))
        names = [f"{r.world}/{r.episode_id}" for r in results]
        ne = [min(r.ne_m, 25.0) for r in results]
        colors = ["#2a9d8f" if r.success else "#d1495b" for r in results]
        ax.bar(range(len(results)), ne, color=colors, gid="ne-bars")
        if results:
            ax.axhline(results[0].success_radius_m, color="black", lw=0.8, ls=":", gid="radius")
        ax.set_xticks(range(len(results)))
        ax.set_xticklabels(names, rotation=75, ha="right", fontsize=6)
        ax.set_ylabel("NE [m]")
        fig.tight_layout()
        os.makedirs(os.path.dirname(os.path.abspath(out)) or ".", exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out
