"""Minimal SVG rendering of a routing solution."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..core import Instance, PartialSolution
from ..problems import PathCvrp, PathOp, PathTsp

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
SIZE = 500
MARGIN = 20


def _polylines(inst: Instance, sol: PartialSolution) -> list[list[int]]:
    if isinstance(inst, PathCvrp):
        out = []
        for i, tour in enumerate(inst.subtours(sol)):
            start = inst.origin if i == 0 and not tour[0].via_depot else inst.depot
            out.append([start, *(s.index for s in tour), inst.depot])
        return out
    if isinstance(inst, (PathTsp, PathOp)):
        if not sol.steps:
            return []
        nodes = [inst.origin, *(s.index for s in sol)]
        if isinstance(inst, PathOp) or inst.is_feasible(sol):
            nodes.append(inst.dest)
        return [nodes]
    raise TypeError(f"cannot render {type(inst).__name__}: no coordinates")


def render_svg(inst: Instance, sol: PartialSolution, path: str | Path | None = None, title: str = "") -> str:
    """SVG drawing: nodes as dots, route polylines (one colour per CVRP subtour),
    depot/origin as a square. Returns the document and writes it if ``path`` is set."""
    lines = _polylines(inst, sol)
    coords = np.asarray(inst.coords)  # type: ignore[attr-defined]
    lo = coords.min(axis=0)
    span = float((coords.max(axis=0) - lo).max()) or 1.0
    scale = (SIZE - 2 * MARGIN) / span

    def pt(i: int) -> tuple[float, float]:
        x, y = (coords[i] - lo) * scale + MARGIN
        return round(float(x), 2), round(float(SIZE - y), 2)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">']
    if title:
        parts.append(f"<title>{escape(title)}</title>")
    for k, line in enumerate(lines):
        pts = " ".join(f"{x},{y}" for x, y in map(pt, line))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="1.5"/>')
    special = {inst.depot} if isinstance(inst, PathCvrp) else {inst.origin}  # type: ignore[attr-defined]
    for i in range(len(coords)):
        x, y = pt(i)
        if i in special:
            parts.append(f'<rect x="{x - 5}" y="{y - 5}" width="10" height="10" fill="black"/>')
        else:
            parts.append(f'<circle cx="{x}" cy="{y}" r="3" fill="#444"/>')
    parts.append("</svg>")
    doc = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(doc)
    return doc
