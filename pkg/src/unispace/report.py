"""Report rendering for the map and lint verbs.

Both verbs print delimited rows; with ``--figure`` they also render a
matplotlib picture to a file: the environment map as nested boxes (lint
violations outlined red), lint results as an observed-vs-limit bar
chart.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .lint import Violation

KIND_COLORS = {
    "domain": "#dfe9f5",
    "partition": "#cfe3cf",
    "site": "#f5e9cf",
    "workplace": "#f0f0f0",
}


def map_rows(root: dict) -> list[tuple]:
    """Flatten a map tree into (depth, kind, name, violations) rows."""
    rows: list[tuple] = []

    def walk(node: dict) -> None:
        marks = ";".join(f"{v[1]}:{v[2]}>{v[3]}" for v in node.get("violations", []))
        rows.append((node["depth"], node["kind"], node["name"], marks))
        for child in node.get("children", []):
            walk(child)

    walk(root)
    return rows


def render_map_figure(root: dict, out_path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(10, 7))

    def draw(node: dict, x: float, y: float, w: float, h: float) -> None:
        bad = bool(node.get("violations"))
        ax.add_patch(Rectangle(
            (x, y), w, h,
            facecolor=KIND_COLORS.get(node["kind"], "#ffffff"),
            edgecolor="#c0392b" if bad else "#555555",
            linewidth=2.0 if bad else 0.8,
        ))
        label = node["name"]
        if node.get("endpoint"):
            label += " @" + node["endpoint"]
        ax.text(x + 0.01 * w, y + h - 0.05, label, fontsize=8, va="top",
                clip_on=True)
        children = node.get("children", [])
        if not children:
            return
        pad = 0.04
        inner_x, inner_w = x + pad, w - 2 * pad
        inner_y, inner_h = y + pad, h - 0.12 - pad
        cw = inner_w / len(children)
        for i, child in enumerate(children):
            draw(child, inner_x + i * cw + 0.01, inner_y, cw - 0.02, inner_h)

    draw(root, 0.02, 0.02, 0.96, 0.96)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.axis("off")
    ax.set_title("environment map")
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_lint_figure(violations: list[Violation], out_path: str | Path,
                       title: str = "structure lint") -> Path:
    fig, ax = plt.subplots(figsize=(8, max(2.0, 0.6 * max(1, len(violations)) + 1)))
    if not violations:
        ax.text(0.5, 0.5, "no violations", ha="center", va="center", fontsize=14)
        ax.axis("off")
    else:
        labels = [f"{v.path}\n({v.rule})" for v in violations]
        observed = [v.observed for v in violations]
        limits = [v.limit for v in violations]
        pos = range(len(violations))
        ax.barh(pos, observed, color="#c0392b", alpha=0.8, label="observed")
        for i, lim in enumerate(limits):
            ax.plot([lim, lim], [i - 0.4, i + 0.4], color="#2c3e50", linewidth=2)
        ax.set_yticks(list(pos))
        ax.set_yticklabels(labels, fontsize=8)
        ax.invert_yaxis()
        ax.set_xlabel("elements (bar) vs limit (line)")
        ax.legend(loc="lower right", fontsize=8)
    ax.set_title(title)
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return out_path
