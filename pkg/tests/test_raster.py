import math

import numpy as np
import pytest

from supervec.geometry import ClosedPath, PathSequence, circle_path, rect_path
from supervec.gradcheck import central_difference, random_scene, relative_error, smooth_upstream
from supervec.raster import (
    DegeneratePathWarning,
    RenderConfig,
    RenderError,
    Rendering,
    load_image,
    render,
    render_binary,
    render_binary_with_grad,
    render_with_grad,
    save_png,
)


def seq_of(*paths):
    return PathSequence.from_paths(list(paths))


def test_empty_sequence_is_background():
    cfg = RenderConfig(background=(0.2, 0.4, 0.6))
    img = render(PathSequence(), 16, 12, cfg)
    assert img.shape == (12, 16, 3)
    assert np.array_equal(img, np.broadcast_to((0.2, 0.4, 0.6), img.shape))
    assert not render_binary(PathSequence(), 16, 12).any()


def test_full_canvas_square_interior_is_its_color():
    c = np.array([0.3, 0.6, 0.9])
    img = render(seq_of(rect_path(0, 0, 1, 1, c)), 64, 64)
    # more than 15 px from every edge the sigmoid is saturated
    inner = img[16:48, 16:48]
    assert np.abs(inner - c).max() < 1e-6


def test_later_path_wins_in_overlap():
    # the overlap spans 19-45 px; its centre is 12 px from every edge
    red = rect_path(0.05, 0.05, 0.7, 0.7, (1, 0, 0))
    blue = rect_path(0.3, 0.3, 0.95, 0.95, (0, 0, 1))
    img = render(seq_of(red, blue), 64, 64)
    assert np.allclose(img[32, 32], (0, 0, 1), atol=1e-4)
    img = render(seq_of(blue, red), 64, 64)
    assert np.allclose(img[32, 32], (1, 0, 0), atol=1e-4)


def test_values_stay_in_unit_range():
    rng = np.random.default_rng(0)
    for _ in range(5):
        img = render(random_scene(rng, 4), 48, 48)
        assert img.min() >= 0.0 and img.max() <= 1.0


def test_disjoint_paths_commute():
    a = circle_path((0.25, 0.25), 0.15, (1, 0, 0))
    b = circle_path((0.75, 0.75), 0.15, (0, 1, 0))
    assert np.abs(render(seq_of(a, b), 64, 64) - render(seq_of(b, a), 64, 64)).max() < 1e-6


def test_pixel_is_affine_in_top_beta():
    under = rect_path(0, 0, 1, 1, (0.2, 0.2, 0.2))
    vals = []
    for beta in (0.0, 0.3, 0.6, 0.9):
        top = rect_path(0.2, 0.2, 0.8, 0.8, (0.9, 0.5, 0.1), beta)
        vals.append(render(seq_of(under, top), 64, 64)[32, 32])
    vals = np.array(vals)
    steps = np.diff(vals, axis=0)
    assert np.allclose(steps, steps[0], atol=1e-12)


def test_binary_left_half():
    b = render_binary(seq_of(rect_path(-0.5, -0.5, 0.5, 1.5)), 64, 64)
    assert b[:, :16].min() > 1 - 1e-6
    assert b[:, 48:].max() < 1e-6
    assert abs(b.mean() - 0.5) < 1e-2


def test_binary_union_of_disjoint_paths_is_max():
    a = circle_path((0.3, 0.3), 0.15)
    b = circle_path((0.7, 0.7), 0.15)
    both = render_binary(seq_of(a, b), 64, 64)
    sep = np.maximum(render_binary(seq_of(a), 64, 64), render_binary(seq_of(b), 64, 64))
    assert np.abs(both - sep).max() < 1e-3


def test_binary_ignores_color_and_beta():
    a = circle_path((0.5, 0.5), 0.3, (0.1, 0.2, 0.3), 0.2)
    b = circle_path((0.5, 0.5), 0.3, (1, 1, 1), 1.0)
    assert np.array_equal(render_binary(seq_of(a), 32, 32), render_binary(seq_of(b), 32, 32))


def test_resolution_consistency():
    rng = np.random.default_rng(1)
    seq = random_scene(rng, 3)
    lo = render(seq, 64, 64)
    hi = render(seq, 128, 128).reshape(64, 2, 64, 2, 3).mean(axis=(1, 3))
    assert np.abs(lo - hi).mean() < 2e-2


def test_circle_area_matches_disc():
    r = 0.3
    n = 256
    area = render_binary(seq_of(circle_path((0.5, 0.5), r)), n, n).sum() / n ** 2
    assert abs(area - math.pi * r * r) / (math.pi * r * r) < 5e-3


def test_degenerate_path_renders_empty_with_warning():
    dead = ClosedPath(np.full((12, 2), 0.5), (1, 0, 0), 1.0)
    with pytest.warns(DegeneratePathWarning):
        rnd = Rendering(seq_of(dead), 16, 16)
    assert rnd.degenerate == [0]
    assert not rnd.image.any()


def test_invalid_sizes_and_configs():
    with pytest.raises(RenderError):
        render(PathSequence(), 0, 4)
    with pytest.raises(RenderError):
        RenderConfig(smoothing_tau=10.0)
    with pytest.raises(RenderError):
        render_with_grad(seq_of(circle_path((0.5, 0.5), 0.2)), 8, 8, None, np.zeros((4, 4, 3)))


def test_zero_upstream_gives_zero_gradient():
    seq = random_scene(np.random.default_rng(2))
    assert not render_with_grad(seq, 32, 32, None, np.zeros((32, 32, 3))).any()


def test_mean_pixel_color_gradient_is_positive():
    seq = seq_of(circle_path((0.5, 0.5), 0.25, (0.3, 0.3, 0.3), 0.8))
    up = np.full((32, 32, 3), 1.0 / (32 * 32 * 3))
    g = render_with_grad(seq, 32, 32, None, up)
    assert np.all(g[0, 24:27] > 0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    cfg = RenderConfig()
    seq = random_scene(rng)
    up = smooth_upstream(rng, 48, 48)
    g = render_with_grad(seq, 48, 48, cfg, up)
    fd = central_difference(lambda p: float(np.sum(render(PathSequence(p), 48, 48, cfg) * up)),
                            seq.params, 1e-3)
    assert np.mean(relative_error(g, fd) < 1e-2) >= 0.95
    # color and beta enter linearly or bilinearly: these agree far more tightly
    assert relative_error(g[:, 24:], fd[:, 24:]).max() < 1e-4


def test_binary_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    seq = random_scene(rng, 2)
    up = smooth_upstream(rng, 40, 40)[..., 0]
    g = render_binary_with_grad(seq, 40, 40, None, up)
    fd = central_difference(lambda p: float(np.sum(render_binary(PathSequence(p), 40, 40) * up)),
                            seq.params, 1e-3)
    assert np.mean(relative_error(g[:, :24], fd[:, :24]) < 1e-2) >= 0.95
    assert not g[:, 24:].any()


def test_backdrop_replaces_background():
    backdrop = np.random.default_rng(5).random((16, 16, 3))
    img = render(PathSequence(), 16, 16, backdrop=backdrop)
    assert np.array_equal(img, backdrop)
    with pytest.raises(RenderError):
        render(PathSequence(), 16, 16, backdrop=np.zeros((8, 8, 3)))


def test_png_round_trip(tmp_path):
    img = render(seq_of(circle_path((0.5, 0.5), 0.3, (0.8, 0.3, 0.1))), 32, 32)
    save_png(img, tmp_path / "a.png")
    back = load_image(tmp_path / "a.png")
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_load_image_rejects_other_formats(tmp_path):
    from PIL import Image

    Image.new("RGB", (4, 4)).save(tmp_path / "x.bmp")
    with pytest.raises(RenderError):
        load_image(tmp_path / "x.bmp")
