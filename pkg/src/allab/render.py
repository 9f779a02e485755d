"""Deterministic SVG pictures of torus foliations: streamlines from a fixed
seed grid, compact leaves emphasized, small arrowheads for orientation.
Byte-identical output for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .foliation import CompactLeaf, Foliation2, compact_leaves, integrate_leaf


@dataclass(frozen=True)
class RenderStyle:
    size: int = 480
    margin: int = 20
    seeds: int = 4
    length: float = 2.5
    flow_color: str = "#8a8f98"
    leaf_color: str = "#c0392b"
    stroke: float = 1.0
    leaf_stroke: float = 2.5


def _wrap_segments(pts: np.ndarray) -> list[np.ndarray]:
    """Fold a polyline into the unit square, splitting where it wraps."""
    folded = pts % 1.0
    jumps = np.abs(np.diff(folded, axis=0)).max(axis=1) > 0.5
    cuts = np.flatnonzero(jumps) + 1
    return [s for s in np.split(folded, cuts) if len(s) >= 2]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, style: RenderStyle):
        self.style = style
        self.inner = style.size - 2 * style.margin
        self.parts: list[str] = []

    def pixel(self, u: float, v: float) -> tuple[float, float]:
        m, s = self.style.margin, self.inner
        return m + u * s, m + (1.0 - v) * s

    def polyline(self, seg: np.ndarray, color: str, width: float):
        pts = " ".join(
            f"{_fmt(x)},{_fmt(y)}" for x, y in (self.pixel(u, v) for u, v in seg)
        )
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width:g}"/>'
        )

    def arrowhead(self, seg: np.ndarray, color: str):
        if len(seg) < 2:
            return
        i = len(seg) // 2
        p = np.array(self.pixel(*seg[i]))
        q = np.array(self.pixel(*seg[min(i + 1, len(seg) - 1)]))
        d = q - p
        n = float(np.hypot(*d))
        if n < 1e-9:
            return
        d = d / n
        left = np.array([-d[1], d[0]])
        a, b, c = p + 6 * d, p - 3 * d + 3 * left, p - 3 * d - 3 * left
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in (a, b, c))
        self.parts.append(f'<polygon points="{pts}" fill="{color}"/>')

    def document(self) -> str:
        s = self.style.size
        m = self.style.margin
        header = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" '
            f'viewBox="0 0 {s} {s}">\n'
            f'<rect x="0" y="0" width="{s}" height="{s}" fill="#ffffff"/>\n'
            f'<rect x="{m}" y="{m}" width="{self.inner}" height="{self.inner}" '
            'fill="none" stroke="#222222" stroke-width="1"/>\n'
        )
        return header + "\n".join(self.parts) + "\n</svg>\n"


def render_foliation(
    F: Foliation2,
    leaves: list[CompactLeaf] | None = None,
    style: RenderStyle = RenderStyle(),
) -> str:
    if leaves is None:
        leaves = compact_leaves(F)
    canvas = _Canvas(style)

    n = style.seeds
    for i in range(n):
        for j in range(n):
            seed = ((i + 0.5) / n, (j + 0.5) / n)
            pts = integrate_leaf(F, seed, style.length, max_step=5e-3)[::4]
            segs = _wrap_segments(pts)
            for seg in segs:
                canvas.polyline(seg, style.flow_color, style.stroke)
            if segs:
                canvas.arrowhead(max(segs, key=len), style.flow_color)

    for leaf in sorted(leaves, key=lambda l: (l.point, l.cls)):
        length = leaf.period_length or float(np.hypot(*leaf.cls)) or 1.0
        pts = integrate_leaf(F, leaf.point, length * 1.001, max_step=2e-3)[::2]
        for seg in _wrap_segments(pts):
            canvas.polyline(seg, style.leaf_color, style.leaf_stroke)

    return canvas.document()
