"""Reconstruction metrics: MSE, PSNR and SSIM for images in [0, 1]."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

# Reported PSNR for identical images.
PSNR_IDENTICAL = 999.0
SSIM_SIGMA = 1.5
SSIM_WIN = 11
K1, K2 = 0.01, 0.03


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    mse: float
    psnr: float
    ssim: float

    def as_dict(self) -> dict:
        return asdict(self)


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3) or a.size == 0:
        raise MetricError("expected a non-empty (h, w) or (h, w, c) image")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio with peak 1.0."""
    m = mse(a, b)
    return PSNR_IDENTICAL if m == 0 else 10.0 * math.log10(1.0 / m)


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    c1, c2 = K1 ** 2, K2 ** 2
    # truncate chosen so the Gaussian spans exactly SSIM_WIN taps
    trunc = ((SSIM_WIN - 1) / 2) / SSIM_SIGMA

    def blur(z):
        return gaussian_filter(z, SSIM_SIGMA, truncate=trunc, mode="reflect")

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    r = (SSIM_WIN - 1) // 2
    if smap.shape[0] > 2 * r and smap.shape[1] > 2 * r:
        smap = smap[r:-r, r:-r]
    return float(smap.mean())


def ssim(a, b) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels.

    The map is averaged over positions where the window fits inside the image;
    images smaller than the window use every position.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        return _ssim_channel(a, b)
    return float(np.mean([_ssim_channel(a[..., c], b[..., c]) for c in range(a.shape[2])]))


def evaluate(a, b) -> MetricReport:
    """MSE, PSNR and SSIM between two images of equal shape."""
    a, b = _pair(a, b)
    return MetricReport(mse(a, b), psnr(a, b), ssim(a, b))
