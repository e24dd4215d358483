"""Pixel-space objectives for fitting paths to one superpixel.

All functions return ``(value, gradient)``.  Path gradients have the
``(n, 28)`` layout of :attr:`PathSequence.params`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import BETA, N_PARAMS, PathSequence
from .raster import RenderConfig, Rendering


class LossError(ValueError):
    pass


@dataclass
class LossWeights:
    lambda_bound: float = 1.0
    lambda_pe: float = 1e-3
    lambda_dpw: float = 0.0

    def __post_init__(self):
        for name in ("lambda_bound", "lambda_pe", "lambda_dpw"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise LossError(f"{name} must be finite and non-negative, got {v}")


def recon_loss(rendered: np.ndarray, target: np.ndarray, mask: np.ndarray):
    """Mask-restricted squared error normalized by the crop area.

    ``sum_p mask(p) * mean_c (rendered - target)**2 / (w * h)``: the squared
    error over superpixel pixels, weighted by the superpixel's share of its
    crop.  Returns the value and the gradient w.r.t. ``rendered``.
    """
    rendered = np.asarray(rendered, dtype=float)
    target = np.asarray(target, dtype=float)
    if rendered.shape != target.shape:
        raise LossError(f"shape mismatch: {rendered.shape} vs {target.shape}")
    mask = np.asarray(mask, dtype=float)
    if mask.shape != rendered.shape[:2]:
        raise LossError(f"mask shape {mask.shape} does not match image {rendered.shape[:2]}")
    h, w = mask.shape
    channels = rendered.shape[2] if rendered.ndim == 3 else 1
    diff = rendered - target
    m = mask[..., None] if rendered.ndim == 3 else mask
    scale = 1.0 / (w * h * channels)
    value = float(np.sum(m * diff * diff) * scale)
    return value, 2.0 * scale * m * diff


def boundary_loss_from_binary(binary: np.ndarray, mask: np.ndarray):
    """Mean over the crop of union coverage lying outside the mask."""
    outside = 1.0 - np.asarray(mask, dtype=float)
    n = outside.size
    return float(np.sum(binary * outside) / n), outside / n


def boundary_loss(seq: PathSequence, mask: np.ndarray, cfg: Optional[RenderConfig] = None):
    """Penalty on path area falling outside ``mask``; gradient is ``(n, 28)``."""
    mask = np.asarray(mask)
    if not mask.any():
        raise LossError("boundary loss needs a non-empty mask")
    h, w = mask.shape
    rnd = Rendering(seq, w, h, cfg)
    value, upstream = boundary_loss_from_binary(rnd.binary, mask)
    return value, rnd.backward(upstream_binary=upstream)


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def path_efficiency_loss(betas):
    """Signed count of visible paths with its surrogate gradient.

    The value is ``sum_i sign(beta_i - 0.5)`` (``sign(0) = 0``); the gradient
    of each term is replaced by ``sig(beta_i) * (1 - sig(beta_i))``.
    """
    betas = np.asarray(betas, dtype=float)
    s = _sig(betas)
    return float(np.sum(np.sign(betas - 0.5))), s * (1.0 - s)


def coarse_objective(seq: PathSequence, target: np.ndarray, mask: np.ndarray,
                     weights: LossWeights, cfg: Optional[RenderConfig] = None):
    """Reconstruction + boundary + path-efficiency objective.

    Returns ``(total, grad, parts)`` where ``parts`` maps term names to their
    unweighted values.
    """
    mask = np.asarray(mask)
    h, w = mask.shape
    rnd = Rendering(seq, w, h, cfg)
    l2, up_img = recon_loss(rnd.image, target, mask)
    parts = {"recon": l2}
    total = l2
    up_bin = None
    if weights.lambda_bound > 0:
        lb, up_bin = boundary_loss_from_binary(rnd.binary, mask)
        up_bin = weights.lambda_bound * up_bin
        parts["bound"] = lb
        total += weights.lambda_bound * lb
    grad = rnd.backward(upstream_image=up_img, upstream_binary=up_bin)
    pe, dpe = path_efficiency_loss(seq.betas)
    parts["pe"] = pe
    if weights.lambda_pe > 0:
        total += weights.lambda_pe * pe
        grad[:, BETA] += weights.lambda_pe * dpe
    return total, grad, parts


def iou(a: np.ndarray, b: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of two coverage maps thresholded at ``threshold``.

    Two empty maps count as identical (IoU 1).
    """
    a = np.asarray(a) >= threshold
    b = np.asarray(b) >= threshold
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union
