"""Differentiable rasterizer for closed-path sequences.

Each path is flattened to a polyline whose vertices are a fixed linear map of
its control points.  Coverage at a pixel center is a sigmoid of the signed
distance to that polyline, and paths are alpha-composited in order with
``alpha = beta * coverage``.  The backward pass chains through compositing,
the sigmoid, the signed distance and the flattening map.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .geometry import (
    BETA,
    COLOR,
    N_CONTROL,
    N_PARAMS,
    N_SHAPE,
    PathSequence,
    flatten_matrix,
    is_degenerate,
    subdivision_depth,
)


class RenderError(ValueError):
    pass


class DegeneratePathWarning(UserWarning):
    pass


@dataclass
class RenderConfig:
    """Rasterization settings.

    smoothing_tau is the sigmoid width in pixels and flatten_tolerance the
    polyline tolerance in pixels.  Pixels further than ``cutoff * tau`` outside
    a path's polyline bounding box are treated as uncovered, and blocks of
    pixels further than that from the outline are filled as exactly 0 or 1.
    """

    smoothing_tau: float = 1.0
    flatten_tolerance: float = 0.25
    background: tuple = (0.0, 0.0, 0.0)
    cutoff: float = 15.0

    def __post_init__(self):
        if not 0.25 <= self.smoothing_tau <= 4.0:
            raise RenderError(f"smoothing_tau must lie in [0.25, 4], got {self.smoothing_tau}")
        if self.flatten_tolerance <= 0:
            raise RenderError("flatten_tolerance must be positive")


@dataclass
class _Coverage:
    window: tuple  # (r0, r1, c0, c1)
    depth: int = 0
    vx: Optional[np.ndarray] = None
    vy: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None
    sd: Optional[np.ndarray] = None

    @property
    def empty(self) -> bool:
        return self.cov is None


def _path_coverage(control: np.ndarray, w: int, h: int, cfg: RenderConfig) -> _Coverage:
    px_ctrl = control * (w, h)
    depth = subdivision_depth(px_ctrl, cfg.flatten_tolerance)
    verts = flatten_matrix(depth) @ px_ctrl
    vx = np.ascontiguousarray(verts[:, 0])
    vy = np.ascontiguousarray(verts[:, 1])
    reach = cfg.cutoff * cfg.smoothing_tau
    c0 = max(int(np.floor(vx.min() - reach)), 0)
    c1 = min(int(np.ceil(vx.max() + reach)), w)
    r0 = max(int(np.floor(vy.min() - reach)), 0)
    r1 = min(int(np.ceil(vy.max() + reach)), h)
    if c1 <= c0 or r1 <= r0:
        return _Coverage((0, 0, 0, 0), depth)
    shape = (r1 - r0, c1 - c0)
    sd = np.empty(shape)
    _kernels.signed_distance_window(vx, vy, r0, r1, c0, c1, sd, reach)
    cov = 0.5 * (1.0 - np.tanh(sd / (2.0 * cfg.smoothing_tau)))
    return _Coverage((r0, r1, c0, c1), depth, vx, vy, cov, sd)


def _over(coverages, alphas, colors, w, h, background):
    """Composite in order; returns the image and each path's under-canvas."""
    background = np.asarray(background, dtype=float)
    canvas = np.empty((h, w, background.shape[-1]))
    canvas[:] = background
    below = []
    for cv, beta, color in zip(coverages, alphas, colors):
        if cv.empty:
            below.append(None)
            continue
        r0, r1, c0, c1 = cv.window
        view = canvas[r0:r1, c0:c1]
        below.append(view.copy())
        a = (beta * cv.cov)[..., None]
        view *= 1.0 - a
        view += a * color
    return canvas, below


def _over_backward(upstream, coverages, alphas, colors, below):
    """Reverse of :func:`_over`; returns d/d color, d/d alpha-scale, d/d coverage."""
    g = np.array(upstream, dtype=float, copy=True)
    n = len(coverages)
    dcolor = np.zeros((n, g.shape[-1]))
    dbeta = np.zeros(n)
    dcov = [None] * n
    for k in range(n - 1, -1, -1):
        cv = coverages[k]
        if cv.empty:
            continue
        r0, r1, c0, c1 = cv.window
        gw = g[r0:r1, c0:c1]
        a = alphas[k] * cv.cov
        dalpha = np.einsum("ijc,ijc->ij", gw, colors[k] - below[k])
        dcolor[k] = np.einsum("ijc,ij->c", gw, a)
        gw *= (1.0 - a)[..., None]
        dbeta[k] = np.sum(dalpha * cv.cov)
        dcov[k] = dalpha * alphas[k]
    return dcolor, dbeta, dcov


class Rendering:
    """Forward state of one rasterization, reusable for several backward passes.

    The same per-path coverage feeds the color composite (``image``) and the
    white-on-black union (``binary``), so pixel losses and the boundary term
    share one geometry evaluation.
    """

    def __init__(self, seq: PathSequence, w: int, h: int, cfg: Optional[RenderConfig] = None,
                 backdrop: Optional[np.ndarray] = None):
        """``backdrop`` is an optional ``(h, w, 3)`` image used instead of the
        flat ``cfg.background``, e.g. a fixed canvas already rendered below."""
        if w < 1 or h < 1:
            raise RenderError(f"canvas must be at least 1x1, got {w}x{h}")
        self.seq = seq
        self.w, self.h = int(w), int(h)
        self.cfg = cfg or RenderConfig()
        if backdrop is not None:
            backdrop = np.asarray(backdrop, dtype=float)
            if backdrop.shape[:2] != (self.h, self.w):
                raise RenderError(f"backdrop shape {backdrop.shape} does not match {self.w}x{self.h}")
        self.backdrop = backdrop
        self.degenerate = []
        self.coverages = []
        for k, ctrl in enumerate(seq.control):
            if is_degenerate(ctrl):
                self.degenerate.append(k)
                self.coverages.append(_Coverage((0, 0, 0, 0)))
            else:
                self.coverages.append(_path_coverage(ctrl, self.w, self.h, self.cfg))
        if self.degenerate:
            warnings.warn(f"degenerate paths rendered empty: {self.degenerate}", DegeneratePathWarning)
        self._image = None
        self._binary = None

    @property
    def image(self) -> np.ndarray:
        if self._image is None:
            bg = self.cfg.background if self.backdrop is None else self.backdrop
            self._image = _over(self.coverages, self.seq.betas, self.seq.colors, self.w, self.h, bg)
        return self._image[0]

    @property
    def binary(self) -> np.ndarray:
        if self._binary is None:
            n = len(self.seq)
            self._binary = _over(self.coverages, np.ones(n), np.ones((n, 1)), self.w, self.h, (0.0,))
        return self._binary[0][..., 0]

    def backward(self, upstream_image=None, upstream_binary=None) -> np.ndarray:
        """Gradient w.r.t. the ``(n, 28)`` parameters for the given upstreams."""
        n = len(self.seq)
        grad = np.zeros((n, N_PARAMS))
        dcov_total = [None] * n

        def accumulate(dcov):
            for k, d in enumerate(dcov):
                if d is not None:
                    dcov_total[k] = d if dcov_total[k] is None else dcov_total[k] + d

        if upstream_image is not None:
            upstream_image = np.asarray(upstream_image, dtype=float)
            if upstream_image.shape != self.image.shape:
                raise RenderError(f"upstream shape {upstream_image.shape} != image {self.image.shape}")
            dcolor, dbeta, dcov = _over_backward(upstream_image, self.coverages, self.seq.betas,
                                                 self.seq.colors, self._image[1])
            grad[:, COLOR] += dcolor
            grad[:, BETA] += dbeta
            accumulate(dcov)
        if upstream_binary is not None:
            upstream_binary = np.asarray(upstream_binary, dtype=float)
            if upstream_binary.shape != self.binary.shape:
                raise RenderError(f"upstream shape {upstream_binary.shape} != mask {self.binary.shape}")
            _, _, dcov = _over_backward(upstream_binary[..., None], self.coverages, np.ones(n),
                                        np.ones((n, 1)), self._binary[1])
            accumulate(dcov)
        grad[:, :N_SHAPE] += self._geometry_backward(dcov_total)
        return grad

    def _geometry_backward(self, dcov_list) -> np.ndarray:
        tau = self.cfg.smoothing_tau
        out = np.zeros((len(self.seq), N_SHAPE))
        for k, (cv, dcov) in enumerate(zip(self.coverages, dcov_list)):
            if cv.empty or dcov is None:
                continue
            dsd = np.ascontiguousarray(dcov * (-cv.cov * (1.0 - cv.cov) / tau))
            gx = np.zeros_like(cv.vx)
            gy = np.zeros_like(cv.vy)
            r0, _, c0, _ = cv.window
            _kernels.signed_distance_backward(cv.vx, cv.vy, r0, c0, dsd, cv.sd, gx, gy)
            mat = flatten_matrix(cv.depth)
            gctrl = np.stack([mat.T @ gx * self.w, mat.T @ gy * self.h], axis=1)
            out[k] = gctrl.reshape(N_CONTROL * 2)
        return out


def render(seq: PathSequence, w: int, h: int, cfg: Optional[RenderConfig] = None,
           backdrop: Optional[np.ndarray] = None) -> np.ndarray:
    """Rasterize ``seq`` to an ``(h, w, 3)`` float image."""
    return Rendering(seq, w, h, cfg, backdrop).image


def render_with_grad(seq: PathSequence, w: int, h: int, cfg: Optional[RenderConfig], upstream) -> np.ndarray:
    """Vector-Jacobian product of :func:`render`; returns an ``(n, 28)`` array."""
    return Rendering(seq, w, h, cfg).backward(upstream_image=upstream)


def render_binary(seq: PathSequence, w: int, h: int, cfg: Optional[RenderConfig] = None) -> np.ndarray:
    """Union of all paths as white on black, ignoring colors and beta."""
    return Rendering(seq, w, h, cfg).binary


def render_binary_with_grad(seq: PathSequence, w: int, h: int, cfg: Optional[RenderConfig], upstream) -> np.ndarray:
    return Rendering(seq, w, h, cfg).backward(upstream_binary=upstream)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def save_png(image: np.ndarray, path) -> None:
    """Write a float image in [0, 1] as an 8-bit PNG."""
    from PIL import Image

    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path, format="PNG")


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG file as an ``(h, w, 3)`` float image in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        if im.format not in ("PNG", "JPEG"):
            raise RenderError(f"unsupported image format {im.format!r}")
        return np.asarray(im.convert("RGB"), dtype=float) / 255.0
