"""Gradient-descent path fitting per superpixel and the full pipeline.

Stages:

* coarse fit: Adam on all parameters of ``n`` paths under reconstruction,
  boundary and path-efficiency terms;
* refinement: new paths over a fixed canvas, optionally pulled toward a
  pseudo ground-truth sequence by the DPW alignment loss;
* finetune: every path jointly against the full image.

Coordinates are clamped to the canvas grown by ``margin_px`` pixels, colors
and beta to [0, 1], after every step.
"""
from __future__ import annotations

import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import distance_transform_edt, gaussian_filter

from . import dpw
from .geometry import BETA, COLOR, N_PARAMS, N_SHAPE, PathSequence, circle_path
from .losses import (
    LossWeights,
    boundary_loss_from_binary,
    coarse_objective,
    recon_loss,
)
from .raster import RenderConfig, Rendering, render
from .superpixel import SuperpixelConfig, SuperpixelMap, SuperpixelPatch, decompose, extract_patch

Logger = Callable[[dict], None]


class OptimizeError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    """Adam and schedule settings.

    ``learning_rate`` applies to coordinates and beta, ``color_learning_rate``
    to colors.  A path whose beta has been clamped to 0 for ``retire_after``
    consecutive steps is retired: it keeps beta = 0 and is no longer rendered
    (0 disables this).  With ``tau_start`` set, the render smoothing width decays
    geometrically from it to the render config's value over the first
    ``tau_fraction`` of the steps.
    """

    learning_rate: float = 2e-2
    color_learning_rate: float = 5e-2
    steps: int = 300
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dpw_gamma: float = 0.1
    dpw_decay_steps: int = 10_000
    seed: int = 0
    margin_px: float = 6.0
    tau_start: Optional[float] = None
    tau_fraction: float = 0.6
    retire_after: int = 50
    log_every: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0 or self.color_learning_rate <= 0:
            raise OptimizeError("learning rates must be positive")
        if self.steps < 1:
            raise OptimizeError("steps must be at least 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise OptimizeError("Adam betas must lie in [0, 1)")
        if self.dpw_gamma < 0 or self.dpw_decay_steps < 0:
            raise OptimizeError("dpw_gamma and dpw_decay_steps must be non-negative")


@dataclass
class StageResult:
    paths: PathSequence
    loss_history: list
    visible_count: int
    parts_history: list = field(default_factory=list, repr=False)


class Adam:
    """Adam over an ``(n, 28)`` array with a per-column learning rate."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = np.asarray(lr, dtype=float)
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _adam_for(params: np.ndarray, opt: OptimizerConfig) -> Adam:
    lr = np.full(N_PARAMS, opt.learning_rate)
    lr[COLOR] = opt.color_learning_rate
    return Adam(params.shape, lr, opt.adam_beta1, opt.adam_beta2, opt.adam_eps)


def clamp_params(params: np.ndarray, w: int, h: int, margin_px: float = 0.0) -> np.ndarray:
    """Clamp in place: coordinates to the canvas plus margin, color and beta to [0, 1]."""
    mx, my = margin_px / w, margin_px / h
    np.clip(params[:, 0:N_SHAPE:2], -mx, 1 + mx, out=params[:, 0:N_SHAPE:2])
    np.clip(params[:, 1:N_SHAPE:2], -my, 1 + my, out=params[:, 1:N_SHAPE:2])
    np.clip(params[:, N_SHAPE:], 0.0, 1.0, out=params[:, N_SHAPE:])
    return params


def _tau_at(step: int, steps: int, opt: OptimizerConfig, cfg: RenderConfig) -> RenderConfig:
    if opt.tau_start is None or opt.tau_start == cfg.smoothing_tau:
        return cfg
    horizon = max(1, int(opt.tau_fraction * steps))
    frac = min(step / horizon, 1.0)
    tau = opt.tau_start * (cfg.smoothing_tau / opt.tau_start) ** frac
    return replace(cfg, smoothing_tau=tau)


def lambda_dpw_at(step: int, lambda0: float, decay_steps: int) -> float:
    """Linear decay of the DPW weight, exactly 0 from ``decay_steps`` on."""
    if decay_steps <= 0 or step >= decay_steps:
        return 0.0
    return lambda0 * (1.0 - step / decay_steps)


def _check_finite(stage: str, step: int, total: float, grad: np.ndarray) -> None:
    if not math.isfinite(total) or not np.all(np.isfinite(grad)):
        raise OptimizeError(f"{stage}: non-finite loss or gradient at step {step} (loss={total})")


class _Retirement:
    """Tracks how long each path has sat at beta = 0."""

    def __init__(self, n: int, patience: int):
        self.patience = patience
        self.zero_run = np.zeros(n, dtype=int)
        self.active = np.ones(n, dtype=bool)

    def update(self, params: np.ndarray) -> None:
        if self.patience <= 0:
            return
        at_zero = params[:, BETA] <= 0.0
        self.zero_run = np.where(at_zero, self.zero_run + 1, 0)
        self.active &= self.zero_run < self.patience

    @property
    def retired(self) -> int:
        return int(np.count_nonzero(~self.active))


def init_paths(patch: SuperpixelPatch, n: int, seed: int = 0, residual: Optional[np.ndarray] = None,
               beta: float = 0.8) -> PathSequence:
    """Small jittered circles at well-spread high-residual mask pixels.

    The first center maximizes blurred residual times depth inside the mask
    (so a uniform patch gets its deepest pixel); later centers also multiply
    by the distance to the nearest chosen center.  Radius is
    ``sqrt(mask_area / n) / 2`` pixels and colors are sampled at the centers.
    """
    if n < 1:
        raise OptimizeError("need at least one path")
    mask = np.asarray(patch.mask, dtype=bool)
    area = int(mask.sum())
    if area == 0:
        raise OptimizeError("patch mask is empty")
    if n > area:
        warnings.warn(f"{n} paths requested for {area} mask pixels; using {area}")
        n = area
    h, w = mask.shape
    rng = np.random.default_rng(seed)
    if residual is None:
        residual = np.ones((h, w))
    res = gaussian_filter(np.asarray(residual, dtype=float), 2.0) + 1e-3
    depth = distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
    base = np.where(mask, res * depth, -np.inf)
    yy, xx = np.mgrid[0:h, 0:w]
    nearest = np.full((h, w), np.inf)
    radius = math.sqrt(area / n) / 2.0
    unit = circle_path((0.0, 0.0), 1.0).control
    out = np.empty((n, N_PARAMS))
    for k in range(n):
        score = base if k == 0 else base * nearest
        r, c = np.unravel_index(np.argmax(score), score.shape)
        nearest = np.minimum(nearest, np.hypot(yy - r, xx - c))
        ctrl = unit * radius + rng.normal(0.0, 0.1 * radius, unit.shape)
        ctrl = (ctrl + (c + 0.5, r + 0.5)) / (w, h)
        out[k, :N_SHAPE] = ctrl.ravel()
        out[k, COLOR] = patch.image[r, c]
        out[k, BETA] = beta
    return PathSequence(out)


def _descend(adam: Adam, params: np.ndarray, grad: np.ndarray, active: np.ndarray,
             w: int, h: int, opt: OptimizerConfig) -> None:
    frozen = params[~active].copy()
    adam.step(params, grad)
    clamp_params(params, w, h, opt.margin_px)
    params[~active] = frozen


def _log(log: Optional[Logger], opt: OptimizerConfig, step: int, steps: int, record: dict) -> None:
    if log is not None and (step % opt.log_every == 0 or step == steps - 1):
        log(record)


def coarse_fit(patch: SuperpixelPatch, n_paths: int, weights: Optional[LossWeights] = None,
               opt: Optional[OptimizerConfig] = None, cfg: Optional[RenderConfig] = None,
               init: Optional[PathSequence] = None, log: Optional[Logger] = None) -> StageResult:
    """Fit ``n_paths`` paths to one superpixel under the coarse objective."""
    weights = weights or LossWeights()
    opt = opt or OptimizerConfig()
    cfg = cfg or RenderConfig()
    h, w = patch.mask.shape
    seq = init.copy() if init is not None else init_paths(patch, n_paths, opt.seed)
    params = clamp_params(seq.params, w, h, opt.margin_px)
    adam = _adam_for(params, opt)
    live = _Retirement(len(params), opt.retire_after)
    history, parts_history = [], []
    for step in range(opt.steps):
        c = _tau_at(step, opt.steps, opt, cfg)
        act = live.active
        total, g_act, parts = coarse_objective(PathSequence(params[act]), patch.image, patch.mask, weights, c)
        # retired paths sit at beta = 0, each contributing -1 to the signed count
        parts["pe"] -= live.retired
        total -= weights.lambda_pe * live.retired
        grad = np.zeros_like(params)
        grad[act] = g_act
        _check_finite("coarse", step, total, grad)
        history.append(total)
        parts_history.append(parts)
        _log(log, opt, step, opt.steps, {"stage": "coarse", "label": patch.label, "step": step,
                                         "loss": total, "visible": int(np.sum(params[:, BETA] >= 0.5))})
        _descend(adam, params, grad, act, w, h, opt)
        live.update(params)
    result = PathSequence(params)
    return StageResult(result, history, result.visible_count(), parts_history)


def split_sequence(seq: PathSequence, k: int) -> tuple[PathSequence, PathSequence]:
    """Prefix ``seq[:k]`` and suffix ``seq[k:]`` (both non-empty)."""
    if not 1 <= k < len(seq):
        raise OptimizeError(f"split point {k} must satisfy 1 <= k < {len(seq)}")
    return seq[:k], seq[k:]


def _alignment(kind: str):
    if kind == "dpw":
        return dpw.dpw_loss
    if kind == "softdtw":
        return dpw.softdtw_loss
    raise OptimizeError(f"unknown alignment loss {kind!r}")


def refine_fit(patch: SuperpixelPatch, canvas_paths: PathSequence, m_new: int,
               pseudo_gt: Optional[PathSequence] = None, weights: Optional[LossWeights] = None,
               opt: Optional[OptimizerConfig] = None, cfg: Optional[RenderConfig] = None,
               init: Optional[PathSequence] = None, align: str = "dpw",
               log: Optional[Logger] = None,
               snapshot: Optional[Callable[[int, PathSequence], None]] = None) -> StageResult:
    """Optimize ``m_new`` paths composited over the fixed ``canvas_paths``.

    Objective: reconstruction of the whole stack, the boundary term on the new
    paths, and ``lambda_dpw(t)`` times the alignment loss between
    ``pseudo_gt`` and the new paths.  Only the new paths are returned.
    ``snapshot(step, paths)`` is called with a copy of the new paths at every
    logging step.
    """
    weights = weights or LossWeights()
    opt = opt or OptimizerConfig()
    cfg = cfg or RenderConfig()
    if m_new < 1:
        raise OptimizeError("m_new must be at least 1")
    if weights.lambda_dpw > 0 and pseudo_gt is None:
        raise OptimizeError("lambda_dpw > 0 needs a pseudo ground-truth sequence")
    align_loss = _alignment(align)
    h, w = patch.mask.shape
    canvas_cache: dict = {}

    def canvas_image(c: RenderConfig) -> np.ndarray:
        key = c.smoothing_tau
        if key not in canvas_cache:
            canvas_cache.clear()
            canvas_cache[key] = render(canvas_paths, w, h, c)
        return canvas_cache[key]

    if init is None:
        resid = np.abs(patch.image - canvas_image(_tau_at(0, opt.steps, opt, cfg))).mean(axis=-1) * patch.mask
        init = init_paths(patch, m_new, opt.seed, residual=resid)
    elif len(init) != m_new:
        raise OptimizeError(f"init has {len(init)} paths, expected {m_new}")
    params = clamp_params(init.copy().params, w, h, opt.margin_px)
    adam = _adam_for(params, opt)
    live = _Retirement(len(params), opt.retire_after)
    history, parts_history = [], []
    for step in range(opt.steps):
        c = _tau_at(step, opt.steps, opt, cfg)
        seq = PathSequence(params)
        act = live.active
        rnd = Rendering(seq[act], w, h, c, backdrop=canvas_image(c))
        l2, up_img = recon_loss(rnd.image, patch.image, patch.mask)
        total, parts = l2, {"recon": l2}
        up_bin = None
        if weights.lambda_bound > 0:
            lb, up_bin = boundary_loss_from_binary(rnd.binary, patch.mask)
            up_bin = weights.lambda_bound * up_bin
            total += weights.lambda_bound * lb
            parts["bound"] = lb
        grad = np.zeros_like(params)
        grad[act] = rnd.backward(upstream_image=up_img, upstream_binary=up_bin)
        lam = lambda_dpw_at(step, weights.lambda_dpw, opt.dpw_decay_steps)
        if pseudo_gt is not None and lam > 0:
            val, g = align_loss(pseudo_gt, seq, opt.dpw_gamma)
            total += lam * val
            grad += lam * g
            parts["align"] = val
        _check_finite("refine", step, total, grad)
        history.append(total)
        parts_history.append(parts)
        _log(log, opt, step, opt.steps, {"stage": "refine", "label": patch.label, "step": step,
                                         "loss": total, "visible": int(np.sum(params[:, BETA] >= 0.5))})
        if snapshot is not None and (step % opt.log_every == 0 or step == opt.steps - 1):
            snapshot(step, PathSequence(params.copy()))
        _descend(adam, params, grad, act, w, h, opt)
        live.update(params)
    result = PathSequence(params)
    return StageResult(result, history, result.visible_count(), parts_history)


def to_global(seq: PathSequence, patch: SuperpixelPatch, image_size: tuple[int, int]) -> PathSequence:
    """Map patch-normalized coordinates to full-image normalized coordinates."""
    W, H = image_size
    pw, ph = patch.full_size
    ox, oy = patch.offset
    out = seq.copy()
    p = out.params
    p[:, 0:N_SHAPE:2] = (ox + p[:, 0:N_SHAPE:2] * pw) / W
    p[:, 1:N_SHAPE:2] = (oy + p[:, 1:N_SHAPE:2] * ph) / H
    return out


def to_local(seq: PathSequence, patch: SuperpixelPatch, image_size: tuple[int, int]) -> PathSequence:
    """Inverse of :func:`to_global`."""
    W, H = image_size
    pw, ph = patch.full_size
    ox, oy = patch.offset
    out = seq.copy()
    p = out.params
    p[:, 0:N_SHAPE:2] = (p[:, 0:N_SHAPE:2] * W - ox) / pw
    p[:, 1:N_SHAPE:2] = (p[:, 1:N_SHAPE:2] * H - oy) / ph
    return out


# Full-image vectorization renders with sharper edges than the per-stage
# default and anneals the smoothing width into it from 1 px.
PIPELINE_TAU = 0.4
PIPELINE_TAU_START = 1.0


@dataclass
class PipelineConfig:
    """Budget split and stage lengths for :func:`vectorize_image`.

    ``coarse_steps`` is the total coarse step budget shared evenly by the
    superpixels; ``refine_steps`` applies to every refinement round.
    """

    coarse_steps: int = 2000
    refine_steps: int = 200
    refine_batch: int = 8
    finetune_steps: int = 500
    finetune_seconds: float = 10.0
    threads: Optional[int] = None
    min_coarse_steps: int = 100


@dataclass
class PipelineResult:
    paths: PathSequence
    spmap: SuperpixelMap
    groups: list  # per superpixel: global-coordinate PathSequence before finetune
    timings: dict


def worker_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SUPERVEC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise OptimizeError(f"SUPERVEC_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _patch_loss(paths: PathSequence, patch: SuperpixelPatch, cfg: RenderConfig) -> float:
    h, w = patch.mask.shape
    return recon_loss(render(paths, w, h, cfg), patch.image, patch.mask)[0]


def run_pipeline(image: np.ndarray, total_paths: int, superpixel_cfg: Optional[SuperpixelConfig] = None,
                 weights: Optional[LossWeights] = None, opt: Optional[OptimizerConfig] = None,
                 cfg: Optional[RenderConfig] = None, pipe: Optional[PipelineConfig] = None,
                 log: Optional[Logger] = None) -> PipelineResult:
    """Superpixels, coarse fits, residual-driven refinement and a joint finetune.

    ``opt`` and ``cfg`` default to a render width of :data:`PIPELINE_TAU`
    annealed from :data:`PIPELINE_TAU_START`.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3:
        raise OptimizeError(f"expected an (h, w, 3) image, got {image.shape}")
    superpixel_cfg = superpixel_cfg or SuperpixelConfig()
    weights = weights or LossWeights()
    opt = opt or OptimizerConfig(tau_start=PIPELINE_TAU_START)
    cfg = cfg or RenderConfig(smoothing_tau=PIPELINE_TAU)
    pipe = pipe or PipelineConfig()
    H, W = image.shape[:2]
    timings = {}
    t0 = time.perf_counter()

    spmap = decompose(image, superpixel_cfg, total_paths)
    k = spmap.num_labels
    if total_paths < k:
        raise OptimizeError(f"path budget {total_paths} is smaller than the {k} superpixels")
    pad = int(math.ceil(opt.margin_px))
    patches = [extract_patch(image, spmap, label, pad=pad) for label in range(k)]
    timings["superpixels"] = time.perf_counter() - t0

    n_coarse = max(1, min(superpixel_cfg.paths_per_superpixel, (total_paths // 2) // k))
    coarse_opt = replace(opt, steps=max(pipe.min_coarse_steps, pipe.coarse_steps // k))

    def coarse_job(label: int) -> PathSequence:
        o = replace(coarse_opt, seed=opt.seed + label)
        res = coarse_fit(patches[label], n_coarse, weights, o, cfg, log=log)
        return res.paths.visible()

    t1 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=worker_count(pipe.threads)) as pool:
        local = list(pool.map(coarse_job, range(k)))
    timings["coarse"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    refine_opt = replace(opt, steps=pipe.refine_steps)
    refine_weights = replace(weights, lambda_dpw=0.0)
    losses = [_patch_loss(local[i], patches[i], cfg) for i in range(k)]
    exhausted = [False] * k
    rounds = 0
    while True:
        visible = sum(len(s) for s in local)
        remaining = total_paths - visible
        open_labels = [i for i in range(k) if not exhausted[i]]
        if remaining <= 0 or not open_labels:
            break
        label = max(open_labels, key=lambda i: losses[i])
        m = min(pipe.refine_batch, remaining)
        o = replace(refine_opt, seed=opt.seed + 1000 * (rounds + 1) + label)
        res = refine_fit(patches[label], local[label], m, None, refine_weights, o, cfg, log=log)
        added = res.paths.visible()
        rounds += 1
        if len(added) == 0:
            exhausted[label] = True
            continue
        local[label] = local[label] + added
        losses[label] = _patch_loss(local[label], patches[label], cfg)
    timings["refine"] = time.perf_counter() - t2

    groups = [to_global(local[i], patches[i], (W, H)) for i in range(k)]
    merged = PathSequence(np.concatenate([g.params for g in groups], axis=0))
    t3 = time.perf_counter()
    if pipe.finetune_steps > 0 and pipe.finetune_seconds > 0 and len(merged) > 0:
        merged = finetune(merged, image, opt, cfg, pipe.finetune_steps, pipe.finetune_seconds, log=log).paths
    timings["finetune"] = time.perf_counter() - t3
    timings["total"] = time.perf_counter() - t0
    return PipelineResult(merged, spmap, groups, timings)


def finetune(seq: PathSequence, image: np.ndarray, opt: OptimizerConfig, cfg: RenderConfig,
             steps: int = 500, seconds: float = 10.0, log: Optional[Logger] = None) -> StageResult:
    """Jointly optimize every path against the full image (reconstruction only)."""
    H, W = image.shape[:2]
    mask = np.ones((H, W))
    params = clamp_params(seq.copy().params, W, H, opt.margin_px)
    adam = _adam_for(params, opt)
    history = []
    start = time.perf_counter()
    ft_opt = replace(opt, steps=steps)
    for step in range(steps):
        rnd = Rendering(PathSequence(params), W, H, cfg)
        total, up = recon_loss(rnd.image, image, mask)
        grad = rnd.backward(upstream_image=up)
        _check_finite("finetune", step, total, grad)
        history.append(total)
        _log(log, ft_opt, step, steps, {"stage": "finetune", "step": step, "loss": total,
                                        "visible": int(np.sum(params[:, BETA] >= 0.5))})
        adam.step(params, grad)
        clamp_params(params, W, H, opt.margin_px)
        if time.perf_counter() - start > seconds:
            break
    result = PathSequence(params)
    return StageResult(result, history, result.visible_count())


def vectorize_image(image: np.ndarray, total_paths: int, superpixel_cfg: Optional[SuperpixelConfig] = None,
                    weights: Optional[LossWeights] = None, opt: Optional[OptimizerConfig] = None,
                    cfg: Optional[RenderConfig] = None, pipe: Optional[PipelineConfig] = None,
                    log: Optional[Logger] = None) -> PathSequence:
    """Vectorize ``image``; the result is in full-image normalized coordinates."""
    return run_pipeline(image, total_paths, superpixel_cfg, weights, opt, cfg, pipe, log).paths


def jsonl_logger(stream) -> Logger:
    """Logger writing one JSON object per line to ``stream``."""
    def write(record: dict) -> None:
        stream.write(json.dumps(record) + "\n")
        stream.flush()
    return write


def write_loss_csv(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(history):
            fh.write(f"{i},{v:.10g}\n")
