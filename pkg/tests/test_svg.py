import math
import xml.etree.ElementTree as ET

from ofdm_wanm import svg

NS = "{http://www.w3.org/2000/svg}"


def test_line_plot_parses_and_skips_bad_points():
    doc = svg.line_plot({"a": ([1, 2, 3], [1e-3, math.nan, 1e-1]), "b": ([1, 2], [0.0, 1.0])}, "t", "x", "y",
                        log_y=True)
    root = ET.fromstring(doc)
    lines = root.findall(f"{NS}polyline")
    assert [p.get("data-series") for p in lines] == ["a", "b"]
    assert len(lines[0].get("points").split()) == 2


def test_empty_series():
    ET.fromstring(svg.line_plot({"a": ([], [])}, "t", "x", "y", log_y=True))
    ET.fromstring(svg.scatter_plot({}, "t", "x", "y"))


def test_certificate_bands_exact():
    bands = [(0.15, 0.30, 1.0), (0.70, 0.85, 0.5)]
    doc = svg.certificate_plot([0.0, 0.5], [0.2, 0.4], bands, truth=[0.2])
    rects = [r for r in ET.fromstring(doc).findall(f"{NS}rect") if r.get("class") == "band"]
    got = [(float(r.get("data-f-low")), float(r.get("data-f-high")), float(r.get("data-weight"))) for r in rects]
    assert got == bands


def test_titles_escaped():
    ET.fromstring(svg.scatter_plot({"<a>": ([0.1], [0.2])}, "x & y", "f", "g"))
