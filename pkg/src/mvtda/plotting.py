"""Small hand-written SVG charts.

Output depends only on the data (fixed number formatting, no timestamps), so
re-running a pipeline reproduces the files byte for byte.
"""
from __future__ import annotations

from html import escape

PALETTE = {"H0": "#222222", "H1": "#c0392b", "H2": "#2e5fa8",
           "truth": "#c0392b", "MV": "#2e5fa8", "PCVR": "#8e44ad"}
MARKERS = {"H0": "circle", "H1": "triangle", "H2": "diamond",
           "truth": "circle", "MV": "triangle", "PCVR": "diamond"}

W, H, PAD = 420, 420, 50


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _marker(kind: str, x: float, y: float, color: str, r: float = 4.0) -> str:
    if kind == "triangle":
        pts = f"{_fmt(x)},{_fmt(y - r)} {_fmt(x - r)},{_fmt(y + r)} {_fmt(x + r)},{_fmt(y + r)}"
        return f'<polygon points="{pts}" fill="{color}"/>'
    if kind == "diamond":
        pts = (f"{_fmt(x)},{_fmt(y - r)} {_fmt(x + r)},{_fmt(y)} "
               f"{_fmt(x)},{_fmt(y + r)} {_fmt(x - r)},{_fmt(y)}")
        return f'<polygon points="{pts}" fill="{color}"/>'
    return f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{color}"/>'


def _frame(width, height, title):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
            f'{escape(title)}</text>']


def scatter_svg(series: dict, xlabel: str = "", ylabel: str = "", limits=None,
                title: str = "", diagonal: bool = False) -> str:
    """Scatter plot of named point series, e.g. a persistence diagram."""
    pts = [p for v in series.values() for p in v]
    if limits is None:
        if pts:
            lo = min(min(p) for p in pts)
            hi = max(max(p) for p in pts)
        else:
            lo, hi = 0.0, 1.0
    else:
        lo, hi = limits
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    lo, hi = lo - 0.05 * span, hi + 0.05 * span

    def sx(v):
        return PAD + (v - lo) / (hi - lo) * (W - 2 * PAD)

    def sy(v):
        return H - PAD - (v - lo) / (hi - lo) * (H - 2 * PAD)

    out = _frame(W, H, title)
    out.append(f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
               f'fill="none" stroke="#888"/>')
    if diagonal:
        out.append(f'<line x1="{_fmt(sx(lo))}" y1="{_fmt(sy(lo))}" x2="{_fmt(sx(hi))}" '
                   f'y2="{_fmt(sy(hi))}" stroke="#bbb" stroke-dasharray="4 3"/>')
    for i in range(5):
        v = lo + (hi - lo) * i / 4
        out.append(f'<text x="{_fmt(sx(v))}" y="{H - PAD + 15}" text-anchor="middle">{v:.3g}</text>')
        out.append(f'<text x="{PAD - 5}" y="{_fmt(sy(v) + 4)}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {H / 2:.1f})">{escape(ylabel)}</text>')
    legend_y = PAD + 12
    for name, values in series.items():
        color = PALETTE.get(name, "#555")
        kind = MARKERS.get(name, "circle")
        for x, y in values:
            out.append(_marker(kind, sx(x), sy(y), color))
        out.append(_marker(kind, W - PAD - 40, legend_y - 4, color))
        out.append(f'<text x="{W - PAD - 32}" y="{legend_y}">{escape(name)}</text>')
        legend_y += 14
    out.append("</svg>")
    return "\n".join(out) + "\n"


def diagram_svg(pd, title: str = "persistence diagram") -> str:
    """Birth (y) against death (x) for each homology dimension."""
    series = {}
    for p in pd.points:
        series.setdefault(f"H{p.dim}", []).append((p.death, p.birth))
    return scatter_svg(series, xlabel="death", ylabel="birth", title=title, diagonal=True)


def null_histogram_svg(null, rho_obs: float, title: str = "permutation null") -> str:
    """Histogram of null maxima with the observed statistic marked."""
    vals = list(null)
    hi = max(vals + [rho_obs, 1e-12])
    bins = 20
    counts = [0] * bins
    for v in vals:
        counts[min(int(v / hi * bins), bins - 1)] += 1
    top = max(counts + [1])
    out = _frame(W, H, title)
    bw = (W - 2 * PAD) / bins
    for i, c in enumerate(counts):
        h = c / top * (H - 2 * PAD)
        out.append(f'<rect x="{_fmt(PAD + i * bw)}" y="{_fmt(H - PAD - h)}" width="{_fmt(bw - 1)}" '
                   f'height="{_fmt(h)}" fill="#999"/>')
    x = PAD + rho_obs / hi * (W - 2 * PAD)
    out.append(f'<line x1="{_fmt(x)}" y1="{PAD}" x2="{_fmt(x)}" y2="{H - PAD}" '
               f'stroke="{PALETTE["H1"]}" stroke-width="2"/>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle">max persistence</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def track_chart_svg(rows: list[str], n_frames: int, layers: dict, title: str = "") -> str:
    """Loop-by-time chart: one row per true loop, markers for detections, lines for links.

    ``layers`` maps a method name to ``(dots, links)`` where ``dots`` is a set of
    ``(row, frame)`` and ``links`` a set of ``(row, frame)`` meaning a link from
    ``frame`` to ``frame + 1``. Frames are 1-based.
    """
    row_h, left = 22, 110
    width = left + 60 * n_frames + 40
    height = 60 + row_h * max(len(rows), 1) + 40
    out = _frame(width, height, title)
    offsets = {name: (i - (len(layers) - 1) / 2) * 5 for i, name in enumerate(layers)}

    def cx(o):
        return left + 60 * (o - 1) + 30

    def cy(r):
        return 50 + row_h * r

    for r, label in enumerate(rows):
        out.append(f'<text x="{left - 8}" y="{_fmt(cy(r) + 4)}" text-anchor="end">{escape(label)}</text>')
    for o in range(1, n_frames + 1):
        out.append(f'<text x="{_fmt(cx(o))}" y="{height - 20}" text-anchor="middle">t{o}</text>')
    for name, (dots, links) in layers.items():
        color = PALETTE.get(name, "#555")
        dy = offsets[name]
        for r, o in sorted(links):
            out.append(f'<line x1="{_fmt(cx(o))}" y1="{_fmt(cy(r) + dy)}" x2="{_fmt(cx(o + 1))}" '
                       f'y2="{_fmt(cy(r) + dy)}" stroke="{color}" stroke-width="2"/>')
        for r, o in sorted(dots):
            out.append(_marker(MARKERS.get(name, "circle"), cx(o), cy(r) + dy, color))
    lx = left
    for name in layers:
        out.append(_marker(MARKERS.get(name, "circle"), lx, height - 6, PALETTE.get(name, "#555")))
        out.append(f'<text x="{lx + 8}" y="{height - 2}">{escape(name)}</text>')
        lx += 70
    out.append("</svg>")
    return "\n".join(out) + "\n"
