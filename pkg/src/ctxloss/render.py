"""Heatmap exports for per-cell arrays: CSV matrices and plain SVG.

A K-dimensional subspace renders as 2-D slices: the first feature on the
x-axis, the second on the y-axis, one slice per combination of the
remaining features. One-feature subspaces render as a single row.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from ctxloss.subspace import ContextSubspace

_CELL = 42
_PAD_LEFT = 110
_PAD_TOP = 46
_PAD_BOTTOM = 14
_PAD_RIGHT = 14


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", str(text)).strip("-") or "x"


def heatmap_slices(values, subspace: ContextSubspace):
    """Yield (suffix, title, matrix, x_labels, y_labels) per 2-D slice."""
    values = np.asarray(values, dtype=np.float64).reshape(subspace.cardinalities)
    x_feat = subspace.features[0]
    x_labels = list(x_feat.labels())
    if subspace.k == 1:
        yield "", x_feat.name, values.reshape(1, -1), x_labels, ["all"]
        return
    y_feat = subspace.features[1]
    y_labels = list(y_feat.labels())
    rest = subspace.features[2:]
    if not rest:
        yield "", f"{y_feat.name} vs {x_feat.name}", values.T, x_labels, y_labels
        return
    for combo in np.ndindex(*(f.cardinality for f in rest)):
        block = values[(slice(None), slice(None)) + combo].T
        parts = [f"{f.name}={f.labels()[c]}" for f, c in zip(rest, combo)]
        suffix = "__" + "__".join(_slug(p) for p in parts)
        title = f"{y_feat.name} vs {x_feat.name} | " + ", ".join(parts)
        yield suffix, title, block, x_labels, y_labels


def write_heatmap_csvs(values, subspace: ContextSubspace, out_dir, stem: str) -> list:
    """One CSV matrix per slice; first column carries the y-axis labels."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for suffix, _, block, x_labels, y_labels in heatmap_slices(values, subspace):
        path = out_dir / f"{stem}{suffix}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([""] + x_labels)
            for label, row in zip(y_labels, block):
                writer.writerow([label] + [repr(float(v)) for v in row])
        written.append(path)
    return written


def _color(value: float, vmax: float) -> str:
    t = 0.0 if vmax <= 0 else min(max(value / vmax, 0.0), 1.0)
    r = round(255 + (178 - 255) * t)
    g = round(255 + (24 - 255) * t)
    b = round(255 + (43 - 255) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def svg_heatmap(block, x_labels, y_labels, title: str, vmax: float = None) -> str:
    """A single heatmap as a standalone SVG string (rects and text only)."""
    block = np.asarray(block, dtype=np.float64)
    ny, nx = block.shape
    if vmax is None:
        vmax = float(block.max()) if block.size else 1.0
    width = _PAD_LEFT + nx * _CELL + _PAD_RIGHT
    height = _PAD_TOP + ny * _CELL + _PAD_BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{_PAD_LEFT}" y="16" font-family="monospace" font-size="13">{title}</text>',
    ]
    for xi, label in enumerate(x_labels):
        cx = _PAD_LEFT + xi * _CELL + _CELL / 2
        out.append(
            f'<text x="{cx:.1f}" y="{_PAD_TOP - 8}" text-anchor="middle" '
            f'font-family="monospace" font-size="9">{label}</text>'
        )
    for yi, label in enumerate(y_labels):
        cy = _PAD_TOP + yi * _CELL + _CELL / 2 + 3
        out.append(
            f'<text x="{_PAD_LEFT - 6}" y="{cy:.1f}" text-anchor="end" '
            f'font-family="monospace" font-size="9">{label}</text>'
        )
    for yi in range(ny):
        for xi in range(nx):
            v = float(block[yi, xi])
            x = _PAD_LEFT + xi * _CELL
            y = _PAD_TOP + yi * _CELL
            out.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
                f'fill="{_color(v, vmax)}" stroke="#777" stroke-width="0.5"/>'
            )
            out.append(
                f'<text x="{x + _CELL / 2:.1f}" y="{y + _CELL / 2 + 3:.1f}" '
                f'text-anchor="middle" font-family="monospace" font-size="8">{v:.3f}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg_heatmaps(values, subspace: ContextSubspace, out_dir, stem: str, vmax: float = None) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=np.float64)
    if vmax is None:
        vmax = float(values.max()) if values.size else 1.0
    written = []
    for suffix, title, block, x_labels, y_labels in heatmap_slices(values, subspace):
        path = out_dir / f"{stem}{suffix}.svg"
        path.write_text(svg_heatmap(block, x_labels, y_labels, title, vmax=vmax))
        written.append(path)
    return written
