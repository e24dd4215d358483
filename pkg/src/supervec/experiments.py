"""Controlled experiments on the refinement stage.

``local_optimum_experiment``
    A canvas reproduces the target except for one missing path.  A new path
    placed elsewhere, trained with the pixel loss alone, has nothing to gain
    locally and becomes invisible; the same path pulled by the DPW loss toward the
    missing path (the pseudo ground truth) moves there and fits it.

``averaging_experiment``
    Fewer paths than targets are fitted with an alignment loss.  SoftDTW must
    align every target with some generated path, so one path is dragged to
    the average of two neighbouring targets; DPW lets each generated path
    match a single target and skip the rest.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dpw import distance_matrix
from .geometry import N_SHAPE, PathSequence, circle_path, rect_path
from .losses import LossWeights, iou
from .optimize import OptimizerConfig, StageResult, refine_fit
from .raster import RenderConfig, render, render_binary
from .superpixel import SuperpixelPatch


def full_patch(image: np.ndarray) -> SuperpixelPatch:
    """Treat a whole image as one superpixel."""
    h, w = image.shape[:2]
    return SuperpixelPatch(np.asarray(image, dtype=float), np.ones((h, w), dtype=bool), (0, 0))


def coverage_mass(seq: PathSequence, w: int, h: int, cfg: Optional[RenderConfig] = None) -> float:
    """Sum over pixels of ``beta * coverage`` for each path, in pixels."""
    return float(sum(p.beta * render_binary(PathSequence.from_paths([p]), w, h, cfg).sum() for p in seq))


def visible_area(new: PathSequence, canvas: PathSequence, w: int, h: int,
                 cfg: Optional[RenderConfig] = None, tol: float = 1.0 / 255.0) -> int:
    """Pixels where drawing ``new`` over ``canvas`` changes the image.

    A pixel counts when some channel moves by more than ``tol`` (one 8-bit
    level by default), so a path that has faded or blended into what lies
    beneath it has no visible area even if its opacity is not zero.
    """
    base = render(canvas, w, h, cfg)
    diff = np.abs(render(canvas + new, w, h, cfg) - base).max(axis=-1)
    return int((diff > tol).sum())


def four_region_image(size: int = 128) -> np.ndarray:
    """Flat-color test image: two half planes, a disc and a rectangle."""
    img = np.empty((size, size, 3))
    img[:] = (0.15, 0.35, 0.75)
    img[:, size // 2:] = (0.95, 0.85, 0.2)
    s = size / 128.0
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    img[(xx - 40 * s) ** 2 + (yy - 70 * s) ** 2 < (22 * s) ** 2] = (0.85, 0.2, 0.25)
    img[int(20 * s):int(50 * s), int(75 * s):int(115 * s)] = (0.2, 0.7, 0.3)
    return img


# ---------------------------------------------------------------- local optimum

def local_optimum_scene():
    """Canvas, missing path and a misplaced initial path.

    The initial path covers only background, far from the missing red circle.
    """
    paths = [rect_path(0.0, 0.0, 1.0, 1.0, (0.55, 0.7, 0.85))]
    paths.append(rect_path(0.08, 0.6, 0.45, 0.92, (0.25, 0.45, 0.2)))
    canvas = PathSequence.from_paths(paths)
    missing = PathSequence.from_paths([circle_path((0.7, 0.68), 0.16, (0.9, 0.2, 0.15))])
    init = PathSequence.from_paths([circle_path((0.3, 0.28), 0.13, (0.9, 0.2, 0.15), beta=0.8)])
    return canvas, missing, init


@dataclass
class LocalOptimumReport:
    area_ratio_l2: float
    mass_ratio_l2: float
    iou_l2: float
    iou_dpw: float
    l2: StageResult = field(repr=False)
    guided: StageResult = field(repr=False)
    target: np.ndarray = field(repr=False)


def local_optimum_experiment(size: int = 64, steps: int = 500, lambda_dpw: float = 1.0,
                             decay_steps: int = 300, opt: Optional[OptimizerConfig] = None,
                             cfg: Optional[RenderConfig] = None,
                             snapshot: Optional[Callable[[str, int, PathSequence], None]] = None
                             ) -> LocalOptimumReport:
    """Run the pixel-loss-only and DPW-guided branches from the same start.

    ``snapshot(branch, step, paths)`` receives the new path during each
    branch (``"l2"`` or ``"dpw"``) at the logging cadence of ``opt``.
    """
    opt = replace(opt or OptimizerConfig(), steps=steps, dpw_decay_steps=decay_steps)
    cfg = cfg or RenderConfig()
    canvas, missing, init = local_optimum_scene()
    target = render(canvas + missing, size, size, cfg)
    patch = full_patch(target)
    common = dict(opt=opt, cfg=cfg, init=init)

    def hook(branch):
        return None if snapshot is None else (lambda step, paths: snapshot(branch, step, paths))

    l2 = refine_fit(patch, canvas, 1, None, LossWeights(0.0, 0.0, 0.0), snapshot=hook("l2"), **common)
    guided = refine_fit(patch, canvas, 1, missing, LossWeights(0.0, 0.0, lambda_dpw), snapshot=hook("dpw"),
                        **common)
    a0 = visible_area(init, canvas, size, size, cfg)
    m0 = coverage_mass(init, size, size, cfg)
    target_mask = render_binary(missing, size, size, cfg)

    def iou_with_target(seq):
        return iou(render_binary(seq, size, size, cfg) * (seq.betas[0] >= 0.5), target_mask)

    return LocalOptimumReport(visible_area(l2.paths, canvas, size, size, cfg) / a0,
                              coverage_mass(l2.paths, size, size, cfg) / m0, iou_with_target(l2.paths),
                              iou_with_target(guided.paths), l2, guided, target)


# ---------------------------------------------------------------- averaging

def averaging_targets() -> PathSequence:
    """Face, two eyebrows and a mouth, in that order."""
    return PathSequence.from_paths([
        circle_path((0.5, 0.52), 0.4, (0.95, 0.8, 0.25)),
        rect_path(0.24, 0.26, 0.42, 0.32, (0.35, 0.2, 0.1)),
        rect_path(0.58, 0.26, 0.76, 0.32, (0.35, 0.2, 0.1)),
        rect_path(0.34, 0.68, 0.66, 0.76, (0.7, 0.15, 0.2)),
    ])


@dataclass
class AveragingReport:
    loss_kind: str
    nearest: list  # nearest target index per optimized path
    averaging_events: list  # (path, target a, target b)
    epsilon: float
    recon: float
    result: StageResult = field(repr=False)


def averaging_epsilon(targets: PathSequence) -> float:
    """A quarter of the smallest half-distance between two targets."""
    p = targets.params
    return min(np.linalg.norm(p[a] - p[b]) / 2 for a, b in itertools.combinations(range(len(p)), 2)) / 4


def averaging_events(paths: PathSequence, targets: PathSequence, eps: Optional[float] = None) -> list:
    """Triples ``(j, a, b)`` where path j averages targets a and b.

    Path j averages a and b when it lies within ``eps`` of their mean while
    more than ``3 * eps`` from each, so it is closer to the mean than to
    either target.
    """
    eps = averaging_epsilon(targets) if eps is None else eps
    t = targets.params
    events = []
    for j, p in enumerate(paths.params):
        for a, b in itertools.combinations(range(len(t)), 2):
            mid = np.linalg.norm(p - 0.5 * (t[a] + t[b]))
            far = min(np.linalg.norm(p - t[a]), np.linalg.norm(p - t[b]))
            if mid < eps and far > 3 * eps:
                events.append((j, a, b))
    return events


def fresh_paths(m: int, seed: int = 0, radius: float = 0.1) -> PathSequence:
    """``m`` small grey circles at random central positions."""
    rng = np.random.default_rng(seed)
    return PathSequence.from_paths([circle_path(rng.uniform(0.3, 0.7, 2), radius, (0.5, 0.5, 0.5), 0.8)
                                    for _ in range(m)])


def matched_circles(targets: PathSequence, color=(0.5, 0.5, 0.5), beta: float = 0.8) -> PathSequence:
    """Grey circles placed and sized like each target (centroid, RMS radius of its control points)."""
    out = []
    for p in targets.params:
        pts = p[:N_SHAPE].reshape(-1, 2)
        c = pts.mean(axis=0)
        r = float(np.sqrt(((pts - c) ** 2).sum(axis=1).mean()))
        out.append(circle_path(c, r, color, beta))
    return PathSequence.from_paths(out)


def averaging_experiment(target_paths: Optional[PathSequence] = None, m: int = 3, loss_kind: str = "dpw",
                         opt: Optional[OptimizerConfig] = None, cfg: Optional[RenderConfig] = None,
                         size: int = 64, steps: int = 400, lambda_align: float = 0.1,
                         gamma: float = 0.01, init: Optional[PathSequence] = None,
                         snapshot: Optional[Callable[[int, PathSequence], None]] = None) -> AveragingReport:
    """Fit ``m`` paths to the rendered targets under pixel plus alignment loss.

    The alignment weight is held constant (no decay) so the converged paths
    show the alignment each loss prefers.  Paths start from
    :func:`fresh_paths` unless ``init`` is given.
    """
    targets = target_paths if target_paths is not None else averaging_targets()
    opt = replace(opt or OptimizerConfig(), steps=steps, dpw_gamma=gamma, dpw_decay_steps=10 ** 9)
    cfg = cfg or RenderConfig()
    image = render(targets, size, size, cfg)
    patch = full_patch(image)
    init = init if init is not None else fresh_paths(m, opt.seed)
    res = refine_fit(patch, PathSequence(), m, targets, LossWeights(0.0, 0.0, lambda_align), opt, cfg,
                     init=init, align=loss_kind, snapshot=snapshot)
    nearest = [int(i) for i in np.argmin(distance_matrix(targets, res.paths), axis=0)]
    eps = averaging_epsilon(targets)
    recon = res.parts_history[-1]["recon"]
    return AveragingReport(loss_kind, nearest, averaging_events(res.paths, targets, eps), eps, recon, res)
