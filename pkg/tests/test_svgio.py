import re

import numpy as np
import pytest

from supervec.geometry import PathSequence, circle_path, rect_path
from supervec.gradcheck import random_scene
from supervec.raster import RenderConfig, render
from supervec.svgio import SvgDocument, SvgError, format_color, from_svg, parse_color, to_svg

NUM = r"-?\d+(?:\.\d+)?"
PATH_GRAMMAR = re.compile(rf"^M {NUM} {NUM}(?: C(?: {NUM} {NUM}){{3}}){{4}} Z$")


def scene():
    return PathSequence.from_paths([
        circle_path((0.3, 0.4), 0.2, (0.9, 0.1, 0.2), 0.9),
        rect_path(0.4, 0.2, 0.8, 0.7, (0.1, 0.6, 0.3), 0.2),
        circle_path((0.6, 0.6), (0.25, 0.15), (0.2, 0.3, 0.9), 0.75),
    ])


def test_empty_sequence():
    doc = to_svg(PathSequence(), 10, 10)
    assert doc.elements == []
    assert "<path" not in doc.to_string()
    assert len(from_svg(doc.to_string())) == 0


def test_threshold_filters_hidden_paths():
    assert len(to_svg(scene(), 64, 64).elements) == 2


def test_document_layout():
    text = to_svg(scene(), 64, 48).to_string()
    assert 'viewBox="0 0 64 48"' in text
    assert text.count('fill-rule="nonzero"') == 2
    for d in re.findall(r' d="([^"]+)"', text):
        assert PATH_GRAMMAR.match(d)


def test_round_trip_parameters():
    seq = scene()
    back = from_svg(to_svg(seq, 64, 64).to_string())
    kept = seq.visible()
    assert len(back) == len(kept)
    assert np.abs(back.params - kept.params).max() < 1e-5


def test_round_trip_rendering():
    rng = np.random.default_rng(0)
    cfg = RenderConfig()
    for _ in range(3):
        seq = random_scene(rng, 4)
        direct = render(seq.visible(), 64, 64, cfg)
        again = render(from_svg(to_svg(seq, 64, 64).to_string()), 64, 64, cfg)
        assert np.abs(direct - again).max() < 1e-3


def test_canonical_text_is_a_fixed_point():
    text = to_svg(scene(), 64, 64, background=(0, 0, 0)).to_string()
    doc = SvgDocument.parse(text)
    assert doc.background is not None
    assert to_svg(from_svg(doc), 64, 64, background=(0, 0, 0)).to_string() == text


def test_save_and_load(tmp_path):
    doc = to_svg(scene(), 32, 32)
    doc.save(tmp_path / "a.svg")
    assert SvgDocument.load(tmp_path / "a.svg").to_string() == doc.to_string()


@pytest.mark.parametrize("body, word", [
    ('<circle cx="1" cy="1" r="1"/>', "unsupported"),
    ('<path d="M 0 0 A 1 1 0 0 1 2 2 Z"/>', "path data"),
    ('<path d="M 0 0 C 1 1 2 2 3 3 Z"/>', "path data"),
    ('<path d="M 0 0 C 1 1 2 2 3 3 C 1 1 2 2 3 3 C 1 1 2 2 3 3 C 1 1 2 2 3 3 Z" transform="scale(2)"/>',
     "transform"),
    ('<path d="M 0 0 C 1 1 2 2 3 3 C 1 1 2 2 3 3 C 1 1 2 2 3 3 C 1 1 2 2 3 3 Z" fill-rule="evenodd"/>',
     "nonzero"),
])
def test_unsupported_content_is_rejected(body, word):
    good = to_svg(scene(), 64, 64).to_string()
    text = good.replace("</svg>", body + "\n</svg>")
    with pytest.raises(SvgError, match=word):
        from_svg(text)


def test_open_path_is_rejected():
    d = "M 0 0 C 1 1 2 2 3 3 C 1 1 2 2 3 3 C 1 1 2 2 3 3 C 1 1 2 2 9 9 Z"
    text = f'<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"><path d="{d}"/></svg>'
    with pytest.raises(SvgError, match="start point"):
        from_svg(text)


def test_not_xml():
    with pytest.raises(SvgError):
        from_svg("<svg")


def test_colors():
    assert np.allclose(parse_color(format_color((0.123456, 0.5, 1.0))), (0.123456, 0.5, 1.0), atol=1e-6)
    assert np.allclose(parse_color("rgb(255, 0, 51)"), (1.0, 0.0, 0.2))
    assert np.allclose(parse_color("#ff0033"), (1.0, 0.0, 0.2))
    with pytest.raises(SvgError):
        parse_color("red")
