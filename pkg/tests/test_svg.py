import numpy as np
import pytest
import xml.etree.ElementTree as ET

from fastgrpo.svg import line_plot, scatter_plot


def test_line_plot_is_valid_and_deterministic():
    series = [(np.arange(5), np.arange(5) ** 2, "sq"), (np.arange(3), [1.0, 0.5, 2.0], "other")]
    a = line_plot(series, "title & co", "x", "y")
    assert a == line_plot(series, "title & co", "x", "y")
    root = ET.fromstring(a)
    assert root.tag.endswith("svg")
    assert a.count("<path") == 2 and "title &amp; co" in a


def test_single_point_becomes_circle():
    doc = line_plot([([1.0], [2.0], "p")])
    ET.fromstring(doc)
    assert "<circle" in doc and "<path" not in doc


def test_empty_inputs_raise():
    with pytest.raises(ValueError):
        line_plot([])
    with pytest.raises(ValueError):
        line_plot([([], [], "e")])
    with pytest.raises(ValueError):
        scatter_plot([(np.zeros((0, 2)), "e")])


def test_scatter_caps_points(rng):
    doc = scatter_plot([(rng.normal(size=(5000, 2)), "a"), (rng.normal(size=(10, 2)), "b")], max_points=100)
    ET.fromstring(doc)
    assert doc.count('r="1.5"') == 110
