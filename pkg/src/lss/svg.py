"""Minimal hand-written SVG plots of 2-D trajectories."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .errors import DimensionError

__all__ = ["PlotSpec", "render_svg", "write_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_GLYPHS = {"DNE": "x", "NonNashLASE": "*"}


@dataclass
class PlotSpec:
    """Axes ranges, strokes per rule and the output path."""

    xlim: Tuple[float, float]
    ylim: Tuple[float, float]
    strokes: Dict[str, str] = field(default_factory=dict)
    width: int = 480
    height: int = 480
    path: Optional[str] = None
    title: str = ""

    def stroke(self, label, k=0):
        return self.strokes.get(label, _COLORS[k % len(_COLORS)])


def render_svg(spec, trajectories, points=()):
    """SVG text for ``{label: Trajectory}`` over critical-point markers.

    ``points`` holds ``(coords, classification)`` pairs; DNE are drawn as
    'x' and non-Nash attractors as '*', other points as small circles.
    """
    w, h, pad = spec.width, spec.height, 30
    (x0, x1), (y0, y1) = spec.xlim, spec.ylim

    def px(p):
        return (pad + (p[0] - x0) / (x1 - x0) * (w - 2 * pad),
                h - pad - (p[1] - y0) / (y1 - y0) * (h - 2 * pad))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}">',
           f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" height="{h - 2 * pad}" '
           'fill="white" stroke="#888"/>']
    if spec.title:
        out.append(f'<text x="{w / 2:.1f}" y="18" text-anchor="middle" '
                   f'font-size="13">{escape(spec.title)}</text>')
    for k, (label, traj) in enumerate(trajectories.items()):
        z = np.asarray(traj.z)
        if z.shape[-1] != 2:
            raise DimensionError("SVG plots need a 2-D game")
        color = spec.stroke(label, k)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in map(px, z))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{pts}"><title>{escape(label)}</title></polyline>')
        sx, sy = px(z[0])
        out.append(f'<circle cx="{sx:.2f}" cy="{sy:.2f}" r="3" fill="red"/>')
    for coords, label in points:
        if len(coords) != 2:
            raise DimensionError("SVG plots need a 2-D game")
        cx, cy = px(coords)
        glyph = _GLYPHS.get(label)
        if glyph is None:
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="none" stroke="#555"/>')
        else:
            out.append(f'<text x="{cx:.2f}" y="{cy + 5:.2f}" text-anchor="middle" '
                       f'font-size="16" font-weight="bold">{glyph}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(spec, trajectories, points=()):
    text = render_svg(spec, trajectories, points)
    if spec.path is not None:
        with open(spec.path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
