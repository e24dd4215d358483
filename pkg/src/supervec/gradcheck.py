"""Finite-difference checks of every analytic gradient in the package.

Each check returns a :class:`CheckResult` whose ``value`` is compared with a
``threshold``; the record layout (name, value, threshold, pass) is what the
command line prints.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .dpw import DpwError, dpw_backward, dpw_forward, dpw_loss, softdtw_backward, softdtw_forward
from .geometry import PathSequence, circle_path
from .losses import boundary_loss, recon_loss
from .raster import RenderConfig, render, render_with_grad


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    # "max" checks pass when value < threshold, "min" when value >= threshold
    kind: str = "max"

    def as_record(self) -> dict:
        return {"name": self.name, "value": float(self.value), "threshold": float(self.threshold),
                "pass": bool(self.passed)}


def _max_check(name, value, threshold) -> CheckResult:
    return CheckResult(name, float(value), threshold, bool(value < threshold), "max")


def _min_check(name, value, threshold) -> CheckResult:
    return CheckResult(name, float(value), threshold, bool(value >= threshold), "min")


def relative_error(analytic, numeric, floor: float = 1e-12) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def scaled_error(analytic, numeric, rel_floor: float = 1e-3) -> np.ndarray:
    """Relative error with the floor tied to the largest numeric entry.

    Entries smaller than ``rel_floor * max|numeric|`` are judged on that
    scale: the O(step**2) truncation error of a central difference is about
    the same for every entry of a matrix, so tiny entries cannot be resolved
    in relative terms.
    """
    n = np.asarray(numeric, dtype=float)
    return relative_error(analytic, n, max(rel_floor * float(np.abs(n).max()), 1e-300))


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences."""
    x = np.array(x, dtype=float)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + step
        hi = f(x)
        x[idx] = old - step
        lo = f(x)
        x[idx] = old
        out[idx] = (hi - lo) / (2.0 * step)
    return out


def random_scene(rng: np.random.Generator, n: int = 3) -> PathSequence:
    """``n`` overlapping ellipses with random colors and opacities."""
    return PathSequence.from_paths([
        circle_path(rng.uniform(0.3, 0.7, 2), rng.uniform(0.1, 0.25, 2), rng.uniform(0, 1, 3),
                    rng.uniform(0.5, 1.0))
        for _ in range(n)])


def smooth_upstream(rng: np.random.Generator, h: int, w: int, sigma: float = 2.0) -> np.ndarray:
    """Unit-variance random image gradient, low-passed over space.

    Gradients arriving from an image loss vary smoothly relative to the
    antialiasing width; white noise at single-pixel scale would instead make
    the finite difference of the flattened outline itself the error source.
    """
    up = gaussian_filter(rng.normal(size=(h, w, 3)), (sigma, sigma, 0))
    return up / up.std()


def check_renderer(n_scenes: int = 20, size: int = 64, step: float = 1e-3, tol: float = 1e-2,
                   min_fraction: float = 0.95, seed: int = 0,
                   cfg: Optional[RenderConfig] = None) -> CheckResult:
    """Fraction of parameters of random 3-path scenes with relative error below ``tol``."""
    rng = np.random.default_rng(seed)
    cfg = cfg or RenderConfig()
    ok = []
    for _ in range(n_scenes):
        seq = random_scene(rng)
        up = smooth_upstream(rng, size, size)
        g = render_with_grad(seq, size, size, cfg, up)
        fd = central_difference(lambda p: float(np.sum(render(PathSequence(p), size, size, cfg) * up)),
                                seq.params, step)
        ok.append(relative_error(g, fd) < tol)
    return _min_check("renderer_fd_fraction", np.mean(np.concatenate([o.ravel() for o in ok])), min_fraction)


def check_recon(seed: int = 0, size: int = 16, step: float = 1e-6, tol: float = 1e-5) -> CheckResult:
    """Max relative error of the reconstruction-loss image gradient."""
    rng = np.random.default_rng(seed)
    img = rng.random((size, size, 3))
    tgt = rng.random((size, size, 3))
    mask = rng.random((size, size)) > 0.3
    _, g = recon_loss(img, tgt, mask)
    fd = central_difference(lambda x: recon_loss(x, tgt, mask)[0], img, step)
    return _max_check("recon_fd_max_rel", relative_error(g, fd, 1e-9).max(), tol)


def check_boundary(n_scenes: int = 5, size: int = 48, step: float = 1e-3, tol: float = 1e-2,
                   min_fraction: float = 0.95, seed: int = 0) -> CheckResult:
    """Fraction of boundary-loss gradient entries within ``tol`` of finite differences.

    Only the 24 coordinates are compared; the boundary term does not depend
    on color or opacity.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (xx - size / 2) ** 2 + (yy - size / 2) ** 2 < (0.3 * size) ** 2
    ok = []
    for _ in range(n_scenes):
        seq = random_scene(rng, 2)
        _, g = boundary_loss(seq, mask)
        fd = central_difference(lambda p: boundary_loss(PathSequence(p), mask)[0], seq.params, step)
        ok.append((relative_error(g, fd, 1e-6) < tol)[:, :24].ravel())
    return _min_check("boundary_fd_fraction", np.mean(np.concatenate(ok)), min_fraction)


def check_dpw_tables(n: int = 50, shape: tuple[int, int] = (4, 4), gamma: float = 0.1, step: float = 1e-5,
                     tol: float = 1e-4, seed: int = 0) -> CheckResult:
    """Max relative error of ``dpw_backward`` over random distance matrices.

    Raises :class:`~supervec.dpw.DpwError` for ``gamma <= 0``, where the
    value is not differentiable.
    """
    if gamma <= 0:
        raise DpwError(f"gamma must be positive for gradients, got {gamma}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        D = rng.random(shape)
        _, tables = dpw_forward(D, gamma)
        G = dpw_backward(tables, D)
        fd = central_difference(lambda d: dpw_forward(d, gamma)[0], D, step)
        worst = max(worst, scaled_error(G, fd).max())
    return _max_check("dpw_fd_max_rel", worst, tol)


def check_softdtw(n: int = 20, shape: tuple[int, int] = (4, 3), gamma: float = 0.1, step: float = 1e-5,
                  tol: float = 1e-4, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        D = rng.random(shape)
        _, R = softdtw_forward(D, gamma)
        E = softdtw_backward(R, D, gamma)
        fd = central_difference(lambda d: softdtw_forward(d, gamma)[0], D, step)
        worst = max(worst, scaled_error(E, fd).max())
    return _max_check("softdtw_fd_max_rel", worst, tol)


def check_dpw_params(n: int = 10, gamma: float = 0.1, step: float = 1e-6, tol: float = 1e-4,
                     seed: int = 0) -> CheckResult:
    """Max relative error of the DPW gradient w.r.t. generated path parameters."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        target = PathSequence(rng.random((4, 28)))
        gen = PathSequence(rng.random((3, 28)))
        _, g = dpw_loss(target, gen, gamma)
        fd = central_difference(lambda p: dpw_loss(target, PathSequence(p), gamma)[0], gen.params, step)
        worst = max(worst, scaled_error(g, fd).max())
    return _max_check("dpw_param_fd_max_rel", worst, tol)


def run_all(seed: int = 0, gamma: float = 0.1, quick: bool = False) -> list[CheckResult]:
    """Every check with its default tolerance; ``quick`` shrinks the renderer sweep."""
    return [
        check_renderer(n_scenes=4 if quick else 20, seed=seed),
        check_recon(seed=seed),
        check_boundary(n_scenes=2 if quick else 5, seed=seed),
        check_dpw_tables(gamma=gamma, seed=seed),
        check_softdtw(gamma=gamma, seed=seed),
        check_dpw_params(gamma=gamma, seed=seed),
    ]
