"""Deterministic SVG line charts built from string templates."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 300
MARGIN = dict(left=48, right=16, top=28, bottom=40)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _num(v):
    return f"{v:.2f}"


def normalize_max(values):
    """Divide by the largest defined value; all-zero or all-undefined curves stay put."""
    top = max((v for v in values if v is not None), default=None)
    if not top:
        return list(values)
    return [None if v is None else v / top for v in values]


def line_chart(series: dict, title="", x_label="bin", y_label="", normalize=False) -> str:
    """``series`` maps a curve name to a list of y values in [0, 1]; ``None`` breaks the line."""
    n = max((len(v) for v in series.values()), default=0)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(i):
        return MARGIN["left"] + (pw * (i + 0.5) / n if n else 0.0)

    def py(v):
        return MARGIN["top"] + ph * (1.0 - min(max(v, 0.0), 1.0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(t)
        parts.append(f'<line x1="{MARGIN["left"]}" y1="{_num(y)}" x2="{WIDTH - MARGIN["right"]}" '
                     f'y2="{_num(y)}" stroke="#ddd"/>')
        parts.append(f'<text x="{MARGIN["left"] - 6}" y="{_num(y + 4)}" text-anchor="end" '
                     f'font-size="10">{t:.2f}</text>')
    base = HEIGHT - MARGIN["bottom"]
    parts.append(f'<text x="{WIDTH / 2:.1f}" y="{base + 30}" text-anchor="middle" '
                 f'font-size="11">{escape(x_label)}</text>')
    if y_label:
        parts.append(f'<text x="12" y="{HEIGHT / 2:.1f}" font-size="11" '
                     f'transform="rotate(-90 12 {HEIGHT / 2:.1f})" text-anchor="middle">'
                     f'{escape(y_label)}</text>')
    step = max(1, n // 8)
    for i in range(0, n, step):
        parts.append(f'<text x="{_num(px(i))}" y="{base + 14}" text-anchor="middle" '
                     f'font-size="10">{i + 1}</text>')

    for k, (name, values) in enumerate(series.items()):
        color = COLORS[k % len(COLORS)]
        values = normalize_max(values) if normalize else list(values)
        runs, cur = [], []
        for i, v in enumerate(values):
            if v is None:
                if cur:
                    runs.append(cur)
                cur = []
            else:
                cur.append((px(i), py(v)))
        if cur:
            runs.append(cur)
        for run in runs:
            pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in run)
            if len(run) == 1:
                x, y = run[0]
                parts.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2" fill="{color}"/>')
            else:
                parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                             f'stroke-width="1.5"/>')
        ly = MARGIN["top"] + 12 + 14 * k
        lx = WIDTH - MARGIN["right"] - 90
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 16}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 20}" y="{ly}" font-size="10">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
