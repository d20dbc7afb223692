"""Decision-border rasters over the (MPR, MAR) plane and their SVG rendering."""
from __future__ import annotations

import numpy as np

from .diffgsq import DEFAULT_THRESHOLDS, GRADES, MORPHOLOGIES, GsqThresholds, crisp_codes

PLANE = (0.2, 1.5)

COLORS = {
    "grade": {"normal": "#ffffff", "mild": "#fff3b0", "moderate": "#ffc98a", "severe": "#f4a3a3"},
    "morphology": {"normal": "#ffffff", "wedge": "#b8d4f0", "crush": "#b8d4f0", "concave": "#f7d2ae"},
}
# label anchors in ratio coordinates
LABELS = {
    "grade": {"normal": (1.0, 1.0), "moderate": (1.15, 0.84), "severe": (1.2, 0.6), "mild": (1.1, 1.25)},
    "morphology": {"wedge": (0.4, 1.2), "crush": (1.2, 0.5), "concave": (0.5, 0.3), "normal": (1.25, 1.2)},
}


def border_grid(step: float = 0.01, th: GsqThresholds = DEFAULT_THRESHOLDS):
    """Crisp classes on a regular grid; returns ``(axis, grade, morphology)``.

    ``grade[i, j]`` is the class at ``mpr = axis[j]``, ``mar = axis[i]``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    lo, hi = PLANE
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    axis = np.round(lo + step * np.arange(n), 12)
    mpr, mar = np.meshgrid(axis, axis)
    g, m = crisp_codes(mpr, mar, th)
    return axis, g, m


def _runs(row):
    start = 0
    for j in range(1, len(row) + 1):
        if j == len(row) or row[j] != row[start]:
            yield start, j, row[start]
            start = j


def raster_svg(axis, codes, classes, kind: str, size: int = 400) -> str:
    """One ``<g>`` layer per class holding run-length polygons of its cells."""
    lo, hi = PLANE
    margin = 50
    step = axis[1] - axis[0] if len(axis) > 1 else hi - lo

    def px(v):
        return margin + (v - lo) / (hi - lo) * size

    def py(v):
        return margin + size - (v - lo) / (hi - lo) * size

    polys = {c: [] for c in range(len(classes))}
    for i, y in enumerate(axis):
        y0, y1 = max(lo, y - step / 2), min(hi, y + step / 2)
        for a, b, c in _runs(codes[i]):
            x0, x1 = max(lo, axis[a] - step / 2), min(hi, axis[b - 1] + step / 2)
            pts = [(px(x0), py(y0)), (px(x1), py(y0)), (px(x1), py(y1)), (px(x0), py(y1))]
            polys[int(c)].append(" ".join(f"{u:.2f},{v:.2f}" for u, v in pts))

    w = size + 2 * margin
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">',
        f'<title>{kind} decision borders</title>',
    ]
    for c, name in enumerate(classes):
        out.append(f'<g id="{kind}-{name}" fill="{COLORS[kind][name]}" stroke="none">')
        out += [f'<polygon points="{p}"/>' for p in polys[c]]
        out.append("</g>")
    out.append(f'<rect x="{px(lo)}" y="{py(hi)}" width="{size}" height="{size}" fill="none" stroke="black"/>')
    out.append('<g id="axes" font-family="sans-serif" font-size="11" text-anchor="middle">')
    for t in np.arange(0.2, 1.51, 0.2):
        out.append(f'<text x="{px(t):.2f}" y="{py(lo) + 16:.2f}">{t:.1f}</text>')
        out.append(f'<text x="{px(lo) - 16:.2f}" y="{py(t) + 4:.2f}">{t:.1f}</text>')
    out.append(f'<text x="{px((lo + hi) / 2):.2f}" y="{py(lo) + 36:.2f}">MPR</text>')
    out.append(f'<text x="{px(lo) - 36:.2f}" y="{py((lo + hi) / 2):.2f}" '
               f'transform="rotate(-90 {px(lo) - 36:.2f} {py((lo + hi) / 2):.2f})">MAR</text>')
    for name, (u, v) in LABELS[kind].items():
        out.append(f'<text x="{px(u):.2f}" y="{py(v):.2f}" font-style="italic">{name}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def border_svgs(step: float = 0.01, th: GsqThresholds = DEFAULT_THRESHOLDS):
    axis, g, m = border_grid(step, th)
    return raster_svg(axis, g, GRADES, "grade"), raster_svg(axis, m, MORPHOLOGIES, "morphology")
