"""Static SVG phase portraits: polygon, labelled vertices, orbits, cycles.

Output depends only on the inputs (no timestamps or random ids), so equal
inputs give byte-identical files.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Sequence

import numpy as np

__all__ = ["render_svg"]

SIZE = 480
MARGIN = 40
STYLES = {
    "polygon": {"stroke": "#222222", "stroke-width": "1.5", "fill": "none"},
    "trajectory": {"stroke": "#3070b0", "stroke-width": "0.8", "fill": "none"},
    "separatrix": {"stroke": "#60a060", "stroke-width": "0.8", "fill": "none",
                   "stroke-dasharray": "4 2"},
    "cycle": {"stroke": "#c03020", "stroke-width": "1.8", "fill": "none"},
    "boundary": {"stroke": "#888888", "stroke-width": "0.8", "fill": "none",
                 "stroke-dasharray": "2 2"},
}


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def render_svg(polygon, trajectories: Sequence = (), cycles: Sequence = (),
               separatrices: Sequence = (), boundaries: Sequence = (),
               title: str | None = None) -> str:
    """SVG text for a phase portrait in the box around ``polygon``."""
    poly = np.asarray(polygon, dtype=float)
    curves = [np.asarray(c, dtype=float) for group in (trajectories, cycles, separatrices,
                                                        boundaries) for c in group]
    pts = np.vstack([poly] + [c for c in curves if len(c)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    scale = (SIZE - 2 * MARGIN) / span

    def tx(p):
        return (MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale)

    svg = ET.Element("svg", {"xmlns": "http://www.w3.org/2000/svg", "width": str(SIZE),
                             "height": str(SIZE), "viewBox": f"0 0 {SIZE} {SIZE}"})
    ET.SubElement(svg, "rect", {"width": str(SIZE), "height": str(SIZE), "fill": "white"})
    if title:
        t = ET.SubElement(svg, "text", {"x": str(MARGIN), "y": str(MARGIN // 2),
                                        "font-family": "sans-serif", "font-size": "13"})
        t.text = title

    def polyline(curve, kind, closed=False):
        if len(curve) < 2:
            return
        coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in map(tx, curve))
        ET.SubElement(svg, "polygon" if closed else "polyline",
                      {"points": coords, "class": kind, **STYLES[kind]})

    for c in boundaries:
        polyline(np.asarray(c, float), "boundary", closed=True)
    for c in separatrices:
        polyline(np.asarray(c, float), "separatrix")
    for c in trajectories:
        polyline(np.asarray(c, float), "trajectory")
    polyline(poly, "polygon", closed=True)
    for c in cycles:
        polyline(np.asarray(c, float), "cycle", closed=True)
    center = poly.mean(axis=0)
    for k, p in enumerate(poly, start=1):
        x, y = tx(p)
        ET.SubElement(svg, "circle", {"cx": _fmt(x), "cy": _fmt(y), "r": "3", "fill": "#222222"})
        out = p - center
        out = out / max(np.linalg.norm(out), 1e-12)
        lab = ET.SubElement(svg, "text", {"x": _fmt(x + 12 * out[0] - 6), "y": _fmt(y - 12 * out[1] + 4),
                                          "font-family": "sans-serif", "font-size": "12"})
        lab.text = f"p{k}"
    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"
