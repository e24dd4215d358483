"""Closed cubic-Bezier fill paths and the polyline primitives built on them.

A path is 12 control points shared cyclically by 4 cubic segments, an RGB
fill color and a visibility scalar ``beta``; 28 numbers in total.  Packed
parameter vectors use the layout ``[x0, y0, ..., x11, y11, r, g, b, beta]``.
Coordinates are in normalized canvas units, the canvas spanning [0, 1]^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

N_CONTROL = 12
N_SEGMENTS = 4
N_SHAPE = 2 * N_CONTROL
N_PARAMS = N_SHAPE + 3 + 1

COLOR = slice(N_SHAPE, N_SHAPE + 3)
BETA = N_SHAPE + 3

# de Casteljau subdivision stops here even if the curve is not yet flat
MAX_DEPTH = 10

# Handle length for a 4-segment circle approximation.
KAPPA = 4.0 * (np.sqrt(2.0) - 1.0) / 3.0


class GeometryError(ValueError):
    """Raised when a geometric primitive violates its contract."""


@dataclass
class ClosedPath:
    """One filled path: 4 end-to-end cubic segments, color and visibility."""

    control: np.ndarray
    color: np.ndarray = field(default_factory=lambda: np.ones(3))
    beta: float = 1.0

    def __post_init__(self):
        self.control = np.asarray(self.control, dtype=float).reshape(N_CONTROL, 2)
        self.color = np.asarray(self.color, dtype=float).reshape(3)
        self.beta = float(self.beta)
        if not np.all(np.isfinite(self.control)):
            raise GeometryError("control points must be finite")

    def segments(self) -> np.ndarray:
        """Return the (4, 4, 2) control polygons of the cubic segments."""
        return self.control[_SEGMENT_INDEX]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.control.ravel(), self.color, [self.beta]])

    @classmethod
    def from_vector(cls, vec) -> "ClosedPath":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_PARAMS,):
            raise GeometryError(f"expected {N_PARAMS} parameters, got shape {vec.shape}")
        return cls(vec[:N_SHAPE].reshape(N_CONTROL, 2), vec[COLOR], vec[BETA])

    @property
    def visible(self) -> bool:
        return self.beta >= 0.5


class PathSequence:
    """Ordered paths backed by an ``(n, 28)`` parameter array.

    Later paths are composited over earlier ones, so order matters.
    """

    def __init__(self, params=None):
        if params is None:
            params = np.zeros((0, N_PARAMS))
        params = np.array(params, dtype=float)
        if params.ndim == 1 and params.size == 0:
            params = params.reshape(0, N_PARAMS)
        if params.ndim != 2 or params.shape[1] != N_PARAMS:
            raise GeometryError(f"parameter array must be (n, {N_PARAMS}), got {params.shape}")
        self.params = params

    @classmethod
    def from_paths(cls, paths: Sequence[ClosedPath]) -> "PathSequence":
        if len(paths) == 0:
            return cls()
        return cls(np.stack([p.to_vector() for p in paths]))

    def __len__(self) -> int:
        return self.params.shape[0]

    def __iter__(self) -> Iterator[ClosedPath]:
        for row in self.params:
            yield ClosedPath.from_vector(row)

    def __getitem__(self, idx):
        """An integer gives a ClosedPath; a slice, mask or index array a PathSequence."""
        if isinstance(idx, slice) or isinstance(idx, (np.ndarray, list)):
            return PathSequence(self.params[idx])
        return ClosedPath.from_vector(self.params[idx])

    def __add__(self, other: "PathSequence") -> "PathSequence":
        return PathSequence(np.concatenate([self.params, other.params], axis=0))

    def __repr__(self) -> str:
        return f"PathSequence(n={len(self)})"

    def copy(self) -> "PathSequence":
        return PathSequence(self.params.copy())

    @property
    def control(self) -> np.ndarray:
        return self.params[:, :N_SHAPE].reshape(-1, N_CONTROL, 2)

    @property
    def colors(self) -> np.ndarray:
        return self.params[:, COLOR]

    @property
    def betas(self) -> np.ndarray:
        return self.params[:, BETA]

    def visible(self, threshold: float = 0.5) -> "PathSequence":
        return PathSequence(self.params[self.betas >= threshold])

    def visible_count(self, threshold: float = 0.5) -> int:
        return int(np.count_nonzero(self.betas >= threshold))


@dataclass
class Polyline:
    vertices: np.ndarray
    closed: bool = True
    degenerate: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if self.closed and not self.degenerate and len(self.vertices) < 3:
            raise GeometryError("closed polyline needs at least 3 vertices")

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.vertices
        b = np.roll(a, -1, axis=0) if self.closed else a[1:]
        if not self.closed:
            a = a[:-1]
        return a, b

    def area(self) -> float:
        """Signed shoelace area (positive for counter-clockwise in y-up frames)."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


_SEGMENT_INDEX = np.array(
    [[3 * i, 3 * i + 1, 3 * i + 2, (3 * i + 3) % N_CONTROL] for i in range(N_SEGMENTS)]
)


def bernstein(t) -> np.ndarray:
    """Cubic Bernstein basis, shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)
    s = 1.0 - t
    return np.stack([s**3, 3 * s * s * t, 3 * s * t * t, t**3], axis=-1)


def eval_cubic(segment, t: float) -> np.ndarray:
    """Evaluate a cubic Bezier segment given as 4 control points at ``t``."""
    if not 0.0 <= t <= 1.0:
        raise GeometryError(f"t must lie in [0, 1], got {t}")
    segment = np.asarray(segment, dtype=float).reshape(4, 2)
    if t == 0.0:
        return segment[0].copy()
    if t == 1.0:
        return segment[3].copy()
    return bernstein(t) @ segment


def _hull_deviation(pieces: np.ndarray) -> float:
    # Distance of the inner control points to the chord bounds the curve's
    # deviation from it (convex hull property).
    a, b = pieces[:, 0], pieces[:, 3]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    worst = 0.0
    for k in (1, 2):
        ap = pieces[:, k] - a
        t = np.where(denom > 0, np.einsum("ij,ij->i", ap, ab) / np.where(denom > 0, denom, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        d = np.linalg.norm(ap - t[:, None] * ab, axis=1)
        worst = max(worst, float(d.max()))
    return worst


def _split_half(pieces: np.ndarray) -> np.ndarray:
    p0, p1, p2, p3 = (pieces[:, k] for k in range(4))
    p01, p12, p23 = (p0 + p1) / 2, (p1 + p2) / 2, (p2 + p3) / 2
    p012, p123 = (p01 + p12) / 2, (p12 + p23) / 2
    mid = (p012 + p123) / 2
    left = np.stack([p0, p01, p012, mid], axis=1)
    right = np.stack([mid, p123, p23, p3], axis=1)
    out = np.empty((2 * len(pieces), 4, 2))
    out[0::2], out[1::2] = left, right
    return out


def subdivision_depth(control, tolerance: float) -> int:
    """Smallest uniform midpoint-subdivision depth meeting ``tolerance``.

    The returned depth is shared by all 4 segments so the vertex layout of
    the flattened path is a fixed linear map of the control points.
    """
    if tolerance <= 0:
        raise GeometryError("tolerance must be positive")
    pieces = np.asarray(control, dtype=float).reshape(N_CONTROL, 2)[_SEGMENT_INDEX]
    depth = 0
    while depth < MAX_DEPTH and _hull_deviation(pieces) > tolerance:
        pieces = _split_half(pieces)
        depth += 1
    return depth


@lru_cache(maxsize=None)
def flatten_matrix(depth: int) -> np.ndarray:
    """Linear map from the 12 control points to the flattened vertices.

    Returns an ``(4 * 2**depth, 12)`` matrix; vertex ``k`` of segment ``i`` is
    the curve point at ``t = k / 2**depth``.
    """
    per = 2**depth
    basis = bernstein(np.arange(per) / per)
    mat = np.zeros((N_SEGMENTS * per, N_CONTROL))
    for i, idx in enumerate(_SEGMENT_INDEX):
        mat[i * per:(i + 1) * per][:, idx] = basis
    mat.setflags(write=False)
    return mat


def is_degenerate(control) -> bool:
    control = np.asarray(control, dtype=float).reshape(N_CONTROL, 2)
    return bool(np.all(np.abs(control - control[0]) < 1e-12))


def flatten(path: ClosedPath, tolerance: float) -> Polyline:
    """Approximate ``path`` by a closed polyline within ``tolerance``."""
    if is_degenerate(path.control):
        return Polyline(path.control[:1], closed=True, degenerate=True)
    depth = subdivision_depth(path.control, tolerance)
    return Polyline(flatten_matrix(depth) @ path.control, closed=True)


def winding_number(poly: Polyline, p) -> int | np.ndarray:
    """Nonzero-rule winding count of ``poly`` around ``p``.

    ``p`` may be a single point or an ``(k, 2)`` array of points.
    """
    if not poly.closed:
        raise GeometryError("winding number needs a closed polyline")
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    a, b = poly.edges()
    px, py = pts[:, 0:1], pts[:, 1:2]
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    cross = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
    up = (ay <= py) & (by > py) & (cross > 0)
    down = (ay > py) & (by <= py) & (cross < 0)
    wn = up.sum(axis=1) - down.sum(axis=1)
    return int(wn[0]) if single else wn


def segment_distance(a: np.ndarray, b: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Distance from each point to each segment, shape ``(len(pts), len(a))``."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    safe = np.where(denom > 0, denom, 1.0)
    ap = pts[:, None, :] - a[None]
    t = np.clip(np.einsum("kij,ij->ki", ap, ab) / safe, 0.0, 1.0)
    t = np.where(denom > 0, t, 0.0)
    return np.linalg.norm(ap - t[..., None] * ab[None], axis=-1)


def signed_distance(poly: Polyline, p) -> float | np.ndarray:
    """Distance to the polyline, negative inside (nonzero winding)."""
    if poly.degenerate or len(poly.vertices) < 3:
        raise GeometryError("signed distance of a degenerate polyline")
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    a, b = poly.edges()
    dist = segment_distance(a, b, pts).min(axis=1)
    inside = np.asarray(winding_number(poly, pts)) != 0
    sd = np.where(inside, -dist, dist)
    return float(sd[0]) if single else sd


def circle_path(center, radius, color=(1.0, 1.0, 1.0), beta: float = 1.0) -> ClosedPath:
    """Standard 4-segment Bezier circle; ``radius`` may be a scalar or (rx, ry)."""
    cx, cy = center
    rx, ry = np.broadcast_to(np.asarray(radius, dtype=float), (2,))
    pts = []
    for q in range(4):
        a0 = q * np.pi / 2
        a1 = a0 + np.pi / 2
        p0 = np.array([np.cos(a0), np.sin(a0)])
        p3 = np.array([np.cos(a1), np.sin(a1)])
        t0 = np.array([-np.sin(a0), np.cos(a0)])
        t1 = np.array([-np.sin(a1), np.cos(a1)])
        pts += [p0, p0 + KAPPA * t0, p3 - KAPPA * t1]
    pts = np.array(pts) * [rx, ry] + [cx, cy]
    return ClosedPath(pts, color, beta)


def polygon_path(corners, color=(1.0, 1.0, 1.0), beta: float = 1.0) -> ClosedPath:
    """Quadrilateral with handles at the chord thirds (straight edges)."""
    corners = np.asarray(corners, dtype=float).reshape(4, 2)
    pts = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        pts += [a, a + (b - a) / 3, a + 2 * (b - a) / 3]
    return ClosedPath(np.array(pts), color, beta)


def rect_path(x0, y0, x1, y1, color=(1.0, 1.0, 1.0), beta: float = 1.0) -> ClosedPath:
    return polygon_path([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], color, beta)
