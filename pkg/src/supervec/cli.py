"""Command line: ``supervec {vectorize, dpw-demo, gradcheck}``.

Every subcommand reports records with the fields ``name``, ``value``,
``threshold`` and ``pass``, as an aligned text table or one JSON object per
line (``--report-format json-lines``).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

# exit statuses
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_OUTPUT = 4
EXIT_BUDGET = 5
EXIT_PIPELINE = 6
EXIT_GAMMA = 7


@dataclass
class Record:
    name: str
    value: object
    threshold: object = None
    passed: bool = True

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "pass": self.passed}


class Reporter:
    """Collects records and writes them to a stream in the chosen format."""

    def __init__(self, fmt: str = "text", stream=None):
        if fmt not in ("text", "json-lines"):
            raise ValueError(f"unknown report format {fmt!r}")
        self.fmt = fmt
        self.stream = stream if stream is not None else sys.stdout
        self.records: list[Record] = []

    def add(self, name, value, threshold=None, passed=True) -> Record:
        rec = Record(name, _plain(value), _plain(threshold), bool(passed))
        self.records.append(rec)
        if self.fmt == "json-lines":
            self.stream.write(json.dumps(rec.as_dict()) + "\n")
        else:
            thr = "-" if threshold is None else _show(rec.threshold)
            self.stream.write(f"{rec.name:<28} {_show(rec.value):>14} {thr:>12}  "
                              f"{'PASS' if rec.passed else 'FAIL'}\n")
        self.stream.flush()
        return rec

    def error(self, message: str) -> None:
        if self.fmt == "json-lines":
            self.stream.write(json.dumps({"name": "error", "value": message, "threshold": None,
                                          "pass": False}) + "\n")
        print(f"supervec: error: {message}", file=sys.stderr)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.records)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and math.isinf(v):
        return None
    return v


def _show(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _writable(path: Path) -> bool:
    parent = path.parent if str(path.parent) else Path(".")
    if path.exists():
        return path.is_file() and os.access(path, os.W_OK)
    return parent.is_dir() and os.access(parent, os.W_OK)


# ---------------------------------------------------------------- vectorize

def cmd_vectorize(args) -> int:
    from .metrics import evaluate
    from .optimize import (PIPELINE_TAU, PIPELINE_TAU_START, OptimizeError, OptimizerConfig, PipelineConfig,
                           jsonl_logger, run_pipeline)
    from .raster import RenderConfig, RenderError, load_image, render, save_png
    from .superpixel import SuperpixelConfig, superpixel_count
    from .svgio import to_svg

    rep = Reporter(args.report_format)
    if args.paths < 1:
        rep.error("--paths must be at least 1")
        return EXIT_USAGE
    if args.compactness <= 0:
        rep.error("--compactness must be positive")
        return EXIT_USAGE
    try:
        image = load_image(args.input)
    except (OSError, RenderError) as exc:
        rep.error(f"cannot read {args.input}: {exc}")
        return EXIT_INPUT
    out = Path(args.output) if args.output else Path(args.input).with_suffix(".svg")
    preview = out.with_suffix(".preview.png")
    for target in [out] + ([preview] if args.preview else []):
        if not _writable(target):
            rep.error(f"cannot write {target}")
            return EXIT_OUTPUT
    n_sp = args.superpixels if args.superpixels is not None else superpixel_count(args.paths)
    if args.paths < n_sp:
        rep.error(f"path budget {args.paths} is smaller than the superpixel count {n_sp}")
        return EXIT_BUDGET

    sp_cfg = SuperpixelConfig(n_superpixels=args.superpixels, compactness=args.compactness)
    opt = OptimizerConfig(seed=args.seed, tau_start=PIPELINE_TAU_START)
    cfg = RenderConfig(smoothing_tau=PIPELINE_TAU)
    pipe = PipelineConfig(coarse_steps=args.coarse_steps, finetune_seconds=args.finetune_seconds,
                          finetune_steps=args.finetune_steps if args.finetune_seconds > 0 else 0)
    log = None
    log_fh = None
    if args.log:
        log_fh = open(args.log, "w", encoding="utf-8")
        log = jsonl_logger(log_fh)
    try:
        result = run_pipeline(image, args.paths, sp_cfg, None, opt, cfg, pipe, log)
    except OptimizeError as exc:
        msg = str(exc)
        rep.error(msg)
        return EXIT_BUDGET if "budget" in msg else EXIT_PIPELINE
    except (ValueError, RuntimeError) as exc:
        rep.error(f"pipeline failed: {exc}")
        return EXIT_PIPELINE
    finally:
        if log_fh is not None:
            log_fh.close()

    H, W = image.shape[:2]
    doc = to_svg(result.paths, W, H, background=cfg.background)
    try:
        doc.save(out)
    except OSError as exc:
        rep.error(f"cannot write {out}: {exc}")
        return EXIT_OUTPUT
    visible = len(doc.elements)
    rep.add("visible_paths", visible, args.paths, visible <= args.paths)
    rep.add("superpixels", result.spmap.num_labels)
    rep.add("seconds", round(result.timings["total"], 3))
    if args.preview:
        rendered = render(result.paths.visible(), W, H, cfg)
        try:
            save_png(rendered, preview)
        except OSError as exc:
            rep.error(f"cannot write {preview}: {exc}")
            return EXIT_OUTPUT
        metrics = evaluate(rendered, image)
        rep.add("mse", metrics.mse)
        rep.add("psnr", metrics.psnr)
        rep.add("ssim", metrics.ssim)
    return EXIT_OK if rep.ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- dpw-demo

def cmd_dpw_demo(args) -> int:
    from .dpw import distance_matrix, dpw_backward, dpw_forward, save_alignment_csv
    from .experiments import averaging_experiment, averaging_targets, local_optimum_experiment, local_optimum_scene
    from .optimize import OptimizerConfig
    from .raster import RenderConfig, render, save_png

    rep = Reporter(args.report_format)
    outdir = Path(args.output)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        rep.error(f"cannot create {outdir}: {exc}")
        return EXIT_OUTPUT
    if args.gamma <= 0:
        rep.error(f"gamma must be positive, got {args.gamma}")
        return EXIT_GAMMA
    size = 64
    cfg = RenderConfig()
    opt = OptimizerConfig(seed=args.seed, log_every=args.snapshot_every)
    canvas = local_optimum_scene()[0]
    targets = averaging_targets()

    def local_snap(branch, step, paths):
        save_png(render(canvas + paths, size, size, cfg), outdir / f"local_{branch}_{step:04d}.png")

    def avg_snap(kind):
        def snap(step, paths):
            save_png(render(paths, size, size, cfg), outdir / f"average_{kind}_{step:04d}.png")
        return snap

    try:
        lo = local_optimum_experiment(size, opt=opt, cfg=cfg, snapshot=local_snap)
        save_png(lo.target, outdir / "local_target.png")
        rep.add("local_l2_area_ratio", lo.area_ratio_l2, 0.01, lo.area_ratio_l2 < 0.01)
        rep.add("local_l2_iou", lo.iou_l2)
        rep.add("local_dpw_iou", lo.iou_dpw, 0.5, lo.iou_dpw > 0.5)
        save_png(render(targets, size, size, cfg), outdir / "average_target.png")
        reports = {}
        for kind in ("softdtw", "dpw"):
            r = averaging_experiment(loss_kind=kind, opt=opt, cfg=cfg, snapshot=avg_snap(kind))
            reports[kind] = r
            rep.add(f"average_{kind}_nearest", " ".join(map(str, r.nearest)))
            rep.add(f"average_{kind}_recon", r.recon)
            D = distance_matrix(targets, r.result.paths)
            if kind == "dpw":
                G = dpw_backward(dpw_forward(D, args.gamma)[1], D)
                save_alignment_csv(G, outdir / "average_dpw_alignment.csv")
        n_soft = len(reports["softdtw"].averaging_events)
        n_dpw = len(reports["dpw"].averaging_events)
        rep.add("average_softdtw_events", n_soft, 1, n_soft >= 1)
        rep.add("average_dpw_events", n_dpw, 0, n_dpw == 0)
    except OSError as exc:
        rep.error(f"cannot write snapshots to {outdir}: {exc}")
        return EXIT_OUTPUT
    return EXIT_OK if rep.ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    from . import gradcheck
    from .dpw import DpwError

    rep = Reporter(args.report_format)
    if args.gamma <= 0:
        try:
            gradcheck.check_dpw_tables(gamma=args.gamma, seed=args.seed)
        except DpwError as exc:
            rep.error(f"DPW is not differentiable at gamma={args.gamma}: {exc}")
            return EXIT_GAMMA
    for check in gradcheck.run_all(seed=args.seed, gamma=args.gamma, quick=args.quick):
        rep.add(check.name, check.value, check.threshold, check.passed)
    return EXIT_OK if rep.ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supervec", description="Superpixel-based image vectorization.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
        p.add_argument("--report-format", choices=("text", "json-lines"), default="text")

    v = sub.add_parser("vectorize", help="convert a PNG/JPEG image to SVG")
    v.add_argument("input")
    v.add_argument("-o", "--output", help="output SVG (default: input with .svg suffix)")
    v.add_argument("--paths", type=int, default=500, help="path budget (default 500)")
    v.add_argument("--superpixels", type=int, default=None, help="override the superpixel count")
    v.add_argument("--compactness", type=float, default=30.0)
    v.add_argument("--finetune-seconds", type=float, default=10.0, help="joint finetune budget, 0 disables")
    v.add_argument("--finetune-steps", type=int, default=500)
    v.add_argument("--coarse-steps", type=int, default=2000, help="coarse steps shared by all superpixels")
    v.add_argument("--preview", action="store_true", help="also write OUT.preview.png and metrics")
    v.add_argument("--log", help="write progress records (JSON lines) to this file")
    common(v)
    v.set_defaults(func=cmd_vectorize)

    d = sub.add_parser("dpw-demo", help="run the local-optimum and averaging experiments")
    d.add_argument("-o", "--output", default="dpw-demo", help="directory for snapshots and CSV")
    d.add_argument("--gamma", type=float, default=0.1, help="soft-min temperature for the alignment dump")
    d.add_argument("--snapshot-every", type=int, default=50)
    common(d)
    d.set_defaults(func=cmd_dpw_demo)

    g = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    g.add_argument("--gamma", type=float, default=0.1, help="DPW soft-min temperature (must be > 0)")
    g.add_argument("--quick", action="store_true", help="fewer renderer scenes")
    common(g)
    g.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
