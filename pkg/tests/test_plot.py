import xml.etree.ElementTree as ET

import pytest

from depthgram.errors import DataError
from depthgram.formats import PointRow
from depthgram.plot import CLASS_COLORS, PlotSpec, load_labels, plot_file, render_svg

SVG = "{http://www.w3.org/2000/svg}"


def _rows(n):
    return [PointRow(i + 1, v, 0.1 * (i + 1), 0.05 * (i + 1), 0.0, i == 0)
            for v in ("dimensions", "time", "time_correlation") for i in range(n)]


def _panels(svg):
    root = ET.fromstring(svg)
    return {g.get("data-variant"): g for g in root.iter(SVG + "g")}


def test_three_points_per_variant():
    panels = _panels(render_svg(_rows(3)))
    assert set(panels) == {"dimensions", "time", "time_correlation"}
    for g in panels.values():
        assert len(g.findall(SVG + "circle")) == 3


def test_parabola_starts_at_two_over_n():
    spec = PlotSpec()
    rows = [PointRow(i + 1, "time", 0.5, 0.3, 0.0, False) for i in range(100)]
    g = _panels(render_svg(rows, spec=spec))["time"]
    line = g.find(SVG + "polyline")
    pts = [tuple(map(float, p.split(","))) for p in line.get("points").split()]
    assert len(pts) == 200
    x0, y0 = pts[0]
    ph = spec.height - 2 * spec.margin
    assert x0 == pytest.approx(spec.margin)
    assert (spec.margin + ph - y0) / ph == pytest.approx(0.02, abs=1e-3)


def test_no_overlay():
    svg = render_svg(_rows(2), spec=PlotSpec(overlay_parabola=False))
    assert "polyline" not in svg


def test_class_colors_from_labels(tmp_path):
    labels = {1: "joint", 2: "typical"}
    svg = render_svg(_rows(2), labels)
    assert CLASS_COLORS["joint"] in svg and CLASS_COLORS["typical"] in svg


def test_points_outside_unit_square_rejected():
    with pytest.raises(DataError):
        render_svg([PointRow(1, "time", 1.5, 0.0, 0.0, False)])


def test_empty_csv_writes_nothing(tmp_path):
    src = tmp_path / "p.csv"
    src.write_text("")
    out = tmp_path / "o.svg"
    with pytest.raises(DataError):
        plot_file(src, out)
    assert not out.exists()


def test_malformed_labels(tmp_path):
    bad = tmp_path / "l.json"
    bad.write_text("{")
    with pytest.raises(DataError):
        load_labels(bad)
