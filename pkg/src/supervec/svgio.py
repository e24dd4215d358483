"""SVG export and re-import for path sequences.

Each visible path becomes one ``<path>`` element in document (= z) order::

    <path d="M x0 y0 C x1 y1 x2 y2 x3 y3 C ... Z" fill="rgb(r%,g%,b%)"
          fill-opacity="beta" fill-rule="nonzero"/>

Coordinates are absolute pixels with 6 decimals.  Colors use the CSS
percentage form with 4 decimals (resolution 1e-6) instead of 8-bit integers,
so a round trip changes rendered pixels by far less than 1e-3.  The parser
accepts only this subset (plus 8-bit ``rgb()`` and ``#rrggbb`` fills and an
optional full-canvas background ``<rect>``).
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import N_CONTROL, N_PARAMS, PathSequence

SVG_NS = "http://www.w3.org/2000/svg"
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
# M point, four cubic segments, Z
_PATH_RE = re.compile(
    r"^\s*M\s*{p}(?:\s*C\s*{p}\s*,?\s*{p}\s*,?\s*{p}){{4}}\s*Z\s*$".format(
        p=r"{n}\s*,?\s*{n}".format(n=_NUM)))
_RGB_PCT = re.compile(r"^rgb\(\s*({n})%\s*,\s*({n})%\s*,\s*({n})%\s*\)$".format(n=_NUM))
_RGB_INT = re.compile(r"^rgb\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)$")
_HEX = re.compile(r"^#([0-9a-fA-F]{6})$")


class SvgError(ValueError):
    pass


@dataclass
class SvgPath:
    d: str
    fill: str
    opacity: float


@dataclass
class SvgDocument:
    width: int
    height: int
    elements: list = field(default_factory=list)
    background: Optional[str] = None

    def to_string(self) -> str:
        lines = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="{SVG_NS}" version="1.1" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">',
        ]
        if self.background is not None:
            lines.append(f'<rect x="0" y="0" width="{self.width}" height="{self.height}" '
                         f'fill="{self.background}"/>')
        for el in self.elements:
            lines.append(f'<path d="{el.d}" fill="{el.fill}" fill-opacity="{_fmt(el.opacity)}" '
                         'fill-rule="nonzero"/>')
        lines.append("</svg>")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())

    @classmethod
    def parse(cls, text: str) -> "SvgDocument":
        try:
            root = ET.fromstring(text)
        except ET.ParseError as exc:
            raise SvgError(f"not well-formed XML: {exc}") from None
        if _local(root.tag) != "svg":
            raise SvgError(f"root element is <{_local(root.tag)}>, expected <svg>")
        try:
            width = int(round(float(root.get("width"))))
            height = int(round(float(root.get("height"))))
        except (TypeError, ValueError):
            raise SvgError("svg element needs numeric width and height") from None
        doc = cls(width, height)
        for i, el in enumerate(root):
            tag = _local(el.tag)
            where = f"element {i} <{tag}>"
            if "transform" in el.attrib or "stroke" in el.attrib:
                raise SvgError(f"{where}: transforms and strokes are not supported")
            if tag == "rect" and i == 0 and not doc.elements:
                doc.background = el.get("fill")
                continue
            if tag != "path":
                raise SvgError(f"{where}: unsupported element")
            d = el.get("d", "")
            if not _PATH_RE.match(d):
                raise SvgError(f"{where}: path data must be M, four C segments and Z: {d[:60]!r}")
            if el.get("fill-rule", "nonzero") != "nonzero":
                raise SvgError(f"{where}: only the nonzero fill rule is supported")
            doc.elements.append(SvgPath(d, el.get("fill", "#000000"), float(el.get("fill-opacity", "1"))))
        return doc

    @classmethod
    def load(cls, path) -> "SvgDocument":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _fmt(v: float, places: int = 6) -> str:
    s = f"{v:.{places}f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def format_color(rgb) -> str:
    r, g, b = (float(np.clip(c, 0.0, 1.0)) * 100.0 for c in rgb)
    return f"rgb({_fmt(r, 4)}%,{_fmt(g, 4)}%,{_fmt(b, 4)}%)"


def parse_color(text: str) -> np.ndarray:
    text = text.strip()
    m = _RGB_PCT.match(text)
    if m:
        return np.array([float(v) for v in m.groups()]) / 100.0
    m = _RGB_INT.match(text)
    if m:
        return np.array([int(v) for v in m.groups()], dtype=float) / 255.0
    m = _HEX.match(text)
    if m:
        h = m.group(1)
        return np.array([int(h[i:i + 2], 16) for i in (0, 2, 4)], dtype=float) / 255.0
    raise SvgError(f"unsupported fill {text!r}")


def path_data(control_px: np.ndarray) -> str:
    """``M .. C .. Z`` string for 12 pixel-space control points."""
    pts = [f"{_fmt(x)} {_fmt(y)}" for x, y in control_px]
    parts = [f"M {pts[0]}"]
    for s in range(4):
        parts.append("C " + " ".join(pts[(3 * s + k) % N_CONTROL] for k in (1, 2, 3)))
    parts.append("Z")
    return " ".join(parts)


def to_svg(seq: PathSequence, w: int, h: int, visibility_threshold: float = 0.5,
           background=None) -> SvgDocument:
    """Export paths with ``beta >= visibility_threshold``.

    ``background`` (an RGB triple) adds a full-canvas rectangle underneath,
    matching a renderer background other than transparent.
    """
    doc = SvgDocument(int(w), int(h), background=None if background is None else format_color(background))
    for path in seq.visible(visibility_threshold):
        px = path.control * (w, h)
        doc.elements.append(SvgPath(path_data(px), format_color(path.color), float(path.beta)))
    return doc


def from_svg(doc) -> PathSequence:
    """Rebuild the path sequence of a document produced by :func:`to_svg`.

    Accepts an :class:`SvgDocument` or SVG text.  Nothing is returned unless
    every element parses.
    """
    if isinstance(doc, str):
        doc = SvgDocument.parse(doc)
    rows = []
    for i, el in enumerate(doc.elements):
        nums = np.array([float(v) for v in re.findall(_NUM, el.d)])
        if nums.size != 2 + 4 * 6 or not _PATH_RE.match(el.d):
            raise SvgError(f"path {i}: malformed path data")
        pts = nums.reshape(-1, 2)  # M + 4 * 3 points; the last one closes the loop
        tol = 1e-5 * max(doc.width, doc.height, 1)
        if np.abs(pts[-1] - pts[0]).max() > tol:
            raise SvgError(f"path {i}: last segment does not end at the start point")
        ctrl = pts[:N_CONTROL] / (doc.width, doc.height)
        row = np.empty(N_PARAMS)
        row[:2 * N_CONTROL] = ctrl.ravel()
        row[2 * N_CONTROL:2 * N_CONTROL + 3] = parse_color(el.fill)
        row[-1] = el.opacity
        if not np.all(np.isfinite(row)):
            raise SvgError(f"path {i}: non-finite values")
        rows.append(row)
    return PathSequence(np.array(rows).reshape(-1, N_PARAMS))
