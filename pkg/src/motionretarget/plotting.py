"""Joint trajectory plots (SVG) and their CSV companions."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

AXES = {"x": 0, "y": 1, "z": 2}


def trajectories_csv(path, curves: dict, fps: float):
    names = list(curves)
    n = max(len(c) for c in curves.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "time"] + names)
        for k in range(n):
            w.writerow([k, repr(k / fps)] + [repr(float(curves[c][k])) if k < len(curves[c]) else "" for c in names])


def trajectories_svg(path, curves: dict, fps: float, joint_name: str, axis: str, spans=(), marks=None):
    """Line plot of one coordinate of one joint over frames, constrained spans shaded."""
    plt.rcParams["svg.hashsalt"] = "motionretarget"
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for start, stop in spans:
        ax.axvspan(start, stop - 1, color="0.85", lw=0)
    styles = ["-", "--", "-"]
    colors = ["tab:blue", "tab:red", "tab:green"]
    for i, (name, values) in enumerate(curves.items()):
        ax.plot(np.arange(len(values)), values, styles[i % 3], color=colors[i % 3], label=name, lw=1.6)
    if marks is not None and len(marks[0]):
        ax.plot(marks[0], marks[1], "o", color="k", ms=3, label="constraint")
    ax.set_xlabel("frame")
    ax.set_ylabel(f"{joint_name} {axis} (m)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def contiguous_spans(frames) -> list[tuple[int, int]]:
    frames = sorted(set(int(f) for f in frames))
    spans = []
    for f in frames:
        if spans and f == spans[-1][1]:
            spans[-1] = (spans[-1][0], f + 1)
        else:
            spans.append((f, f + 1))
    return spans
