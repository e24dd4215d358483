"""Acceptance criteria, one test each.

Every test reports its verdict through the ``criterion`` fixture, which
prints one PASS/FAIL line per criterion in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from supervec.dpw import dpw_backward, dpw_bruteforce, dpw_forward
from supervec.experiments import averaging_experiment, four_region_image, local_optimum_experiment
from supervec.geometry import PathSequence, circle_path, rect_path
from supervec.gradcheck import central_difference, check_renderer, random_scene, relative_error, scaled_error
from supervec.losses import boundary_loss, path_efficiency_loss, recon_loss
from supervec.metrics import psnr
from supervec.optimize import PIPELINE_TAU, PipelineConfig, run_pipeline
from supervec.raster import RenderConfig, render, render_binary
from supervec.superpixel import isoperimetric_quotients, slic_decompose
from supervec.svgio import from_svg, to_svg

pytestmark = pytest.mark.acceptance


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


@pytest.fixture(scope="module")
def astronaut():
    from skimage import data, transform

    return lambda size: transform.resize(data.astronaut(), (size, size), anti_aliasing=True)


def test_c01_dpw_matches_bruteforce(criterion):
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        D = rng.random((rng.integers(1, 7), rng.integers(1, 5))) * 10
        worst = max(worst, abs(dpw_forward(D, 0.0)[0] - dpw_bruteforce(D)[0]))
    elapsed = time.perf_counter() - start
    criterion(1, worst < 1e-9 and elapsed < 10.0,
              f"max |dp - brute| = {worst:.2e} (< 1e-9), {elapsed:.2f} s (< 10 s)")


def test_c02_soft_value_bounds_and_convergence(criterion):
    rng = np.random.default_rng(0)
    gammas = (1.0, 0.1, 0.01)
    bound_violations = {g: 0 for g in gammas}
    order_violations = 0
    for _ in range(100):
        D = rng.random((5, 4))
        hard = dpw_forward(D, 0.0)[0]
        gaps = []
        for g in gammas:
            v = dpw_forward(D, g)[0]
            if not hard - g * math.log(20) - 1e-12 <= v <= hard + 1e-12:
                bound_violations[g] += 1
            gaps.append(abs(v - hard))
        order_violations += any(b > a for a, b in zip(gaps, gaps[1:]))
    bad = sum(bound_violations.values())
    detail = (f"gamma*ln(20) bound violated on {bad}/300 (matrix, gamma) pairs "
              f"{ {g: n for g, n in bound_violations.items()} }; gap ordering violated on {order_violations}/100")
    criterion(2, bad == 0 and order_violations == 0, detail)


def test_c03_dpw_gradient(criterion):
    rng = np.random.default_rng(0)
    worst_scaled, worst_plain = 0.0, 0.0
    for _ in range(50):
        D = rng.random((4, 4))
        _, tables = dpw_forward(D, 0.1)
        G = dpw_backward(tables, D)
        fd = central_difference(lambda d: dpw_forward(d, 0.1)[0], D, 1e-5)
        worst_scaled = max(worst_scaled, scaled_error(G, fd).max())
        worst_plain = max(worst_plain, relative_error(G, fd).max())
    criterion(3, worst_scaled < 1e-4,
              f"max relative error {worst_scaled:.2e} (< 1e-4) with a 1e-3*max|fd| floor; "
              f"unfloored {worst_plain:.2e}")


def test_c04_renderer_gradient(criterion):
    res = check_renderer(n_scenes=20, size=64, step=1e-3, tol=1e-2, min_fraction=0.95)
    criterion(4, res.passed, f"{res.value:.4f} of parameters within 1e-2 relative error (>= 0.95)")


def test_c05_circle_area(criterion):
    n = 256
    worst = 0.0
    for r in (0.1, 0.2, 0.3, 0.4):
        area = render_binary(PathSequence.from_paths([circle_path((0.5, 0.5), r)]), n, n).sum() / n ** 2
        worst = max(worst, abs(area - math.pi * r * r) / (math.pi * r * r))
    criterion(5, worst < 5e-3, f"worst relative area error {worst:.2e} over r in 0.1..0.4 (< 5e-3)")


def test_c06_loss_contracts(criterion):
    n = 64
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    mask = (xx > 8) & (xx < 56) & (yy > 8) & (yy < 56)
    interior = PathSequence.from_paths([rect_path(16 / n, 16 / n, 48 / n, 48 / n)])
    b_interior = boundary_loss(interior, mask)[0]
    b_ones = boundary_loss(random_scene(np.random.default_rng(0)), np.ones((n, n)))[0]
    pe_hi = path_efficiency_loss(np.ones(5))[0]
    pe_lo = path_efficiency_loss(np.zeros(5))[0]
    img = np.random.default_rng(1).random((n, n, 3))
    rec = recon_loss(img, img, mask)[0]
    surrogate = path_efficiency_loss([0.5])[1][0]
    surrogate_err = abs(surrogate - sig(0.5) * (1 - sig(0.5)))
    checks = {
        "boundary interior < 1e-4": b_interior < 1e-4,
        "boundary all-ones == 0": b_ones == 0.0,
        "PE = +-n": pe_hi == 5 and pe_lo == -5,
        "recon identical == 0": rec == 0.0,
        "surrogate within 1e-9": surrogate_err < 1e-9,
    }
    failed = [k for k, ok in checks.items() if not ok]
    criterion(6, not failed, f"interior boundary {b_interior:.2e}, all-ones {b_ones}, PE {pe_hi:+g}/{pe_lo:+g}, "
                             f"recon {rec}, surrogate {surrogate:.6f}; failed: {failed or 'none'}")


def test_c07_local_optimum_escape(criterion):
    start = time.perf_counter()
    rep = local_optimum_experiment()
    elapsed = time.perf_counter() - start
    criterion(7, rep.area_ratio_l2 < 0.01 and rep.iou_dpw > 0.5 and elapsed < 120,
              f"pixel-only visible area ratio {rep.area_ratio_l2:.4f} (< 0.01), guided IoU {rep.iou_dpw:.3f} (> 0.5), "
              f"{elapsed:.1f} s (< 120 s)")


def test_c08_averaging_failure(criterion):
    start = time.perf_counter()
    soft = averaging_experiment(loss_kind="softdtw")
    hard = averaging_experiment(loss_kind="dpw")
    elapsed = time.perf_counter() - start
    criterion(8, len(soft.averaging_events) >= 1 and len(hard.averaging_events) == 0 and elapsed < 120,
              f"softdtw averaging events {soft.averaging_events} (>= 1), dpw {hard.averaging_events} (none), "
              f"{elapsed:.1f} s (< 120 s)")


def test_c09_superpixel_partition(criterion, astronaut):
    photo = astronaut(256)
    a = slic_decompose(photo, 100, compactness=30)
    b = slic_decompose(photo, 100, compactness=30)
    counts = sum(int(m.sum()) for m in a.masks)
    exact = counts == 256 * 256 and int(a.sizes.sum()) == 256 * 256
    same = np.array_equal(a.labels, b.labels)
    q30 = isoperimetric_quotients(a).mean()
    q10 = isoperimetric_quotients(slic_decompose(photo, 100, compactness=10)).mean()
    criterion(9, exact and same and q30 >= q10,
              f"mask pixel total {counts} (65536), deterministic {same}, mean IQ c30 {q30:.3f} >= c10 {q10:.3f}")


def test_c10_end_to_end_synthetic(criterion):
    img = four_region_image(128)
    start = time.perf_counter()
    res = run_pipeline(img, 64, pipe=PipelineConfig(coarse_steps=2000, finetune_steps=500,
                                                    finetune_seconds=float("inf"), threads=1))
    elapsed = time.perf_counter() - start
    value = psnr(render(res.paths, 128, 128, RenderConfig(smoothing_tau=PIPELINE_TAU)), img)
    criterion(10, value >= 30.0 and elapsed < 300,
              f"PSNR {value:.2f} dB (>= 30) with {len(res.paths.visible())} visible paths, "
              f"{elapsed:.1f} s (< 300 s)")


def test_c11_svg_round_trip(criterion):
    rng = np.random.default_rng(0)
    cfg = RenderConfig()
    worst = 0.0
    for w, h in ((64, 64), (80, 48), (37, 53)):
        for _ in range(5):
            seq = random_scene(rng, 5)
            direct = render(seq.visible(), w, h, cfg)
            again = render(from_svg(to_svg(seq, w, h).to_string()), w, h, cfg)
            worst = max(worst, float(np.abs(direct - again).max()))
    criterion(11, worst < 1e-3, f"max abs pixel difference {worst:.2e} (< 1e-3) over 15 scenes")


def test_c12_budget_honesty(criterion, astronaut):
    photo = astronaut(96)
    pipe = PipelineConfig(coarse_steps=400, min_coarse_steps=40, refine_steps=30, finetune_steps=20)
    lines, ok = [], True
    for n in (100, 500):
        res = run_pipeline(photo, n, pipe=pipe)
        emitted = len(to_svg(res.paths, 96, 96).elements)
        visible = int(np.sum(res.paths.betas >= 0.5))
        ok &= emitted <= n and visible == emitted
        lines.append(f"n={n}: {emitted} emitted, {visible} with beta >= 0.5")
    criterion(12, ok, "; ".join(lines))
