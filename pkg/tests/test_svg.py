import xml.etree.ElementTree as ET

from scanssc.svg import line_chart, normalize_max

NS = "{http://www.w3.org/2000/svg}"


def test_deterministic_and_well_formed():
    series = {"Recall": [0.2, 0.5, 0.9], "IoU": [0.1, 0.3, 0.4]}
    a = line_chart(series, title="depth & bins")
    assert a == line_chart(series, title="depth & bins")
    root = ET.fromstring(a)
    assert len(root.findall(f"{NS}polyline")) == 2
    assert "depth &amp; bins" in a


def test_none_breaks_lines():
    root = ET.fromstring(line_chart({"mIoU": [0.1, 0.2, None, 0.4, None, 0.5, 0.6]}))
    assert len(root.findall(f"{NS}polyline")) == 2
    assert len(root.findall(f"{NS}circle")) == 1


def test_normalize():
    assert normalize_max([0.1, None, 0.4]) == [0.25, None, 1.0]
    assert normalize_max([0.0, 0.0]) == [0.0, 0.0]
    assert normalize_max([None]) == [None]
    assert line_chart({"a": [0.1, 0.2]}, normalize=True) == line_chart({"a": [0.5, 1.0]})


def test_values_map_to_plot_area():
    root = ET.fromstring(line_chart({"a": [0.0, 1.0]}))
    pts = root.find(f"{NS}polyline").get("points").split()
    ys = [float(p.split(",")[1]) for p in pts]
    assert ys[0] > ys[1]
