"""Static SVG rendering of DepthGram scatter plots.

One panel per variant, each with both axes fixed to [0, 1].  Points are
coloured by class when labels are available; flagged observations get a
dark outline.  The optional overlay draws the parabola ``g_n`` that bounds
the point cloud from above.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .depth import parabola_g
from .engine import VARIANTS
from .errors import DataError
from .formats import read_depthgram_csv

CLASS_COLORS = {
    "typical": "#9e9e9e",
    "magnitude": "#2e8b57",
    "shape": "#1f5fbf",
    "joint": "#e8451e",
}
TITLES = {"dimensions": "Dimensions", "time": "Time", "time_correlation": "Time/correlation"}


@dataclass
class PlotSpec:
    variants: tuple = VARIANTS
    width: int = 360
    height: int = 360
    margin: int = 44
    overlay_parabola: bool = True
    colors: dict = field(default_factory=lambda: dict(CLASS_COLORS))
    radius: float = 3.0
    samples: int = 200


def load_labels(path):
    """Observation classes (1-based index -> class) from a labels JSON."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return {int(o["index"]): str(o["type"]) for o in doc["observations"]}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: unreadable labels ({exc})") from None


def _panel(rows, variant, n, spec, labels, x0):
    m, w, h = spec.margin, spec.width, spec.height
    pw, ph = w - 2 * m, h - 2 * m

    def sx(v):
        return x0 + m + v * pw

    def sy(v):
        return m + (1.0 - v) * ph

    out = [f'<g class="panel" data-variant="{variant}">',
           f'<rect x="{x0 + m}" y="{m}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
           f'<text x="{x0 + w / 2:.1f}" y="{m - 12}" text-anchor="middle" '
           f'font-size="14">{escape(TITLES.get(variant, variant))}</text>']
    for v in (0.0, 0.5, 1.0):
        out.append(f'<text x="{sx(v):.1f}" y="{h - m + 16}" text-anchor="middle" '
                   f'font-size="10">{v:g}</text>')
        out.append(f'<text x="{x0 + m - 6}" y="{sy(v) + 3:.1f}" text-anchor="end" '
                   f'font-size="10">{v:g}</text>')
    out.append(f'<text x="{x0 + w / 2:.1f}" y="{h - 8}" text-anchor="middle" '
               f'font-size="11">1 - MEI(MBD)</text>')
    out.append(f'<text x="{x0 + 12}" y="{h / 2:.1f}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 {x0 + 12} {h / 2:.1f})">MBD(MEI)</text>')
    if spec.overlay_parabola and n >= 2:
        z = np.linspace(0.0, 1.0, spec.samples)
        g = np.clip(parabola_g(n, z), 0.0, 1.0)
        pts = " ".join(f"{sx(a):.3f},{sy(b):.3f}" for a, b in zip(z, g))
        out.append(f'<polyline class="parabola" fill="none" stroke="black" '
                   f'stroke-dasharray="4 3" points="{pts}"/>')
    for r in rows:
        cls = labels.get(r.observation, "typical")
        color = spec.colors.get(cls, spec.colors["typical"])
        stroke = ' stroke="black" stroke-width="1"' if r.flagged else ""
        out.append(f'<circle cx="{sx(r.dg1):.3f}" cy="{sy(r.dg2):.3f}" r="{spec.radius}" '
                   f'fill="{color}"{stroke} data-obs="{r.observation}"/>')
    out.append("</g>")
    return out


def render_svg(rows, labels=None, spec=None):
    """SVG document for DepthGram point rows (see :func:`read_depthgram_csv`)."""
    spec = spec or PlotSpec()
    labels = labels or {}
    for r in rows:
        if not (0.0 <= r.dg1 <= 1.0 and 0.0 <= r.dg2 <= 1.0):
            raise DataError(f"observation {r.observation} ({r.variant}) lies outside [0,1]^2")
    variants = [v for v in spec.variants if any(r.variant == v for r in rows)]
    variants += sorted({r.variant for r in rows} - set(variants))
    n = len({r.observation for r in rows})
    total_w = spec.width * len(variants)
    legend_h = 24
    body = []
    for k, v in enumerate(variants):
        body += _panel([r for r in rows if r.variant == v], v, n, spec, labels, k * spec.width)
    classes = [c for c in CLASS_COLORS if c in set(labels.values())] or ["typical"]
    x = 10
    for c in classes:
        body.append(f'<circle cx="{x + 5}" cy="{spec.height + 12}" r="5" fill="{spec.colors[c]}"/>')
        body.append(f'<text x="{x + 14}" y="{spec.height + 16}" font-size="11">{c}</text>')
        x += 90
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" '
            f'height="{spec.height + legend_h}" viewBox="0 0 {total_w} {spec.height + legend_h}" '
            f'font-family="sans-serif">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def plot_file(points_csv, out_svg, labels_path=None, overlay_parabola=True):
    """Render `points_csv` to `out_svg`.  Nothing is written if the input is invalid."""
    rows = read_depthgram_csv(points_csv)
    labels = load_labels(labels_path) if labels_path else None
    svg = render_svg(rows, labels, PlotSpec(overlay_parabola=overlay_parabola))
    Path(out_svg).write_text(svg, encoding="utf-8")
    return out_svg
