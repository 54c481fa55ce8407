"""SVG heatmap of a phase grid: log10 MSE clamped to [-8, 0] on a white to
dark-red scale, with an optional transition line drawn in black."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

LOG_MIN, LOG_MAX = -8.0, 0.0
CELL = 24
MARGIN = 60
LEGEND_W = 80
LOW_RGB = np.array([255, 255, 255])
HIGH_RGB = np.array([128, 0, 0])


def mse_color(mse) -> str:
    """Hex colour for one MSE; white at or below 1e-8, grey for missing."""
    if not np.isfinite(mse):
        return "#808080"
    level = np.log10(max(mse, 1e-300))
    t = (min(max(level, LOG_MIN), LOG_MAX) - LOG_MIN) / (LOG_MAX - LOG_MIN)
    rgb = np.rint(LOW_RGB + t * (HIGH_RGB - LOW_RGB)).astype(int)
    return "#{:02X}{:02X}{:02X}".format(*rgb)


def _edges(centres):
    c = np.asarray(centres, dtype=float)
    if c.size == 1:
        return np.array([max(c[0] - 0.025, 0.0), min(c[0] + 0.025, 1.0)])
    mid = 0.5 * (c[1:] + c[:-1])
    return np.concatenate(([c[0] - (mid[0] - c[0])], mid, [c[-1] + (c[-1] - mid[-1])]))


def render_heatmap(grid, path, line=None, title="", value="mean_mse"):
    """Write the grid (alpha on x, rho on y) as SVG; ``line`` is a
    ``PhaseLine`` or any sequence of ``(rho, alpha)`` points."""
    values = grid.field(value)
    if values.size == 0:
        raise ValueError("empty grid")
    ax, ry = _edges(grid.alphas), _edges(grid.rhos)
    width = CELL * len(grid.alphas)
    height = CELL * len(grid.rhos)

    def px(a):
        return MARGIN + (a - ax[0]) / (ax[-1] - ax[0]) * width

    def py(r):
        return MARGIN + height - (r - ry[0]) / (ry[-1] - ry[0]) * height

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * MARGIN + width + LEGEND_W}" '
           f'height="{2 * MARGIN + height}">',
           f'<text x="{MARGIN}" y="{MARGIN / 2}" font-size="14">{escape(title)}</text>']
    for i in range(len(grid.rhos)):
        for j in range(len(grid.alphas)):
            x0, x1 = px(ax[j]), px(ax[j + 1])
            y0, y1 = py(ry[i + 1]), py(ry[i])
            out.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                       f'fill="{mse_color(values[i, j])}"/>')
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{width}" height="{height}" '
               'fill="none" stroke="black"/>')
    out.append(f'<text x="{MARGIN + width / 2}" y="{MARGIN + height + 35}" font-size="14">alpha</text>')
    out.append(f'<text x="15" y="{MARGIN + height / 2}" font-size="14">rho</text>')
    for a in (ax[0], ax[-1]):
        out.append(f'<text x="{px(a) - 10:.2f}" y="{MARGIN + height + 18}" font-size="11">{a:.2f}</text>')
    for r in (ry[0], ry[-1]):
        out.append(f'<text x="{MARGIN - 40}" y="{py(r) + 4:.2f}" font-size="11">{r:.2f}</text>')

    if line is not None:
        pts = getattr(line, "points", line)
        coords = " ".join(f"{px(a):.2f},{py(r):.2f}" for r, a in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="#000000" stroke-width="2"/>')

    lx = MARGIN + width + 20
    steps = 9
    for k in range(steps):
        level = LOG_MAX - k * (LOG_MAX - LOG_MIN) / (steps - 1)
        y = MARGIN + k * height / steps
        out.append(f'<rect x="{lx}" y="{y:.2f}" width="16" height="{height / steps:.2f}" '
                   f'fill="{mse_color(10.0 ** level)}" stroke="black" stroke-width="0.3"/>')
        out.append(f'<text x="{lx + 20}" y="{y + 12:.2f}" font-size="10">{level:.0f}</text>')
    out.append(f'<text x="{lx}" y="{MARGIN - 8}" font-size="10">log10 MSE</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path
