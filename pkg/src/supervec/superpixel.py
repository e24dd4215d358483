"""SLIC superpixels and per-superpixel crops.

Clustering runs in CIELAB plus pixel position with the distance

    D = sqrt(d_lab**2 + (compactness / S)**2 * d_xy**2),  S = sqrt(H * W / n)

searched in a 2S x 2S window around every center.  After the iterations,
every label is made 4-connected: stray components are merged into the
largest neighbouring label and labels are renumbered 0..K-1.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab

_FOUR = ndimage.generate_binary_structure(2, 1)


class SuperpixelError(ValueError):
    pass


class SuperpixelBackend(enum.Enum):
    SLIC = "slic"
    LSC = "lsc"
    SEEDS = "seeds"
    SNIC = "snic"


@dataclass
class SuperpixelConfig:
    """Decomposition settings.

    ``n_superpixels=None`` derives the count from the path budget with
    :func:`superpixel_count`.
    """

    n_superpixels: Optional[int] = None
    compactness: float = 30.0
    iterations: int = 10
    paths_per_superpixel: int = 32
    backend: SuperpixelBackend = SuperpixelBackend.SLIC

    def __post_init__(self):
        if self.compactness <= 0:
            raise SuperpixelError("compactness must be positive")
        if self.iterations < 1:
            raise SuperpixelError("iterations must be at least 1")
        if self.n_superpixels is not None and self.n_superpixels < 1:
            raise SuperpixelError("n_superpixels must be at least 1")


def superpixel_count(total_paths: int, paths_per_superpixel: int = 32) -> int:
    """Superpixels for a budget of ``total_paths``.

    Half the budget goes to the coarse stage at about ``paths_per_superpixel``
    visible paths each, so ``n1 = total_paths / (2 * paths_per_superpixel)``.
    """
    return max(1, int(round(total_paths / (2 * paths_per_superpixel))))


@dataclass(frozen=True)
class SuperpixelMap:
    labels: np.ndarray
    num_labels: int
    bboxes: np.ndarray  # (num_labels, 4) as half-open (r0, r1, c0, c1)
    _sizes: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "SuperpixelMap":
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.size == 0:
            raise SuperpixelError("labels must be a non-empty 2-D array")
        uniq, inv = np.unique(labels, return_inverse=True)
        labels = inv.reshape(labels.shape).astype(np.int32)
        labels.setflags(write=False)
        k = uniq.size
        boxes = np.zeros((k, 4), dtype=int)
        for i, sl in enumerate(ndimage.find_objects(labels + 1)):
            boxes[i] = (sl[0].start, sl[0].stop, sl[1].start, sl[1].stop)
        sizes = np.bincount(labels.ravel(), minlength=k)
        return cls(labels, k, boxes, sizes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    def mask(self, label: int) -> np.ndarray:
        """Full-image boolean mask of ``label``."""
        self._check(label)
        return self.labels == label

    @property
    def masks(self) -> list[np.ndarray]:
        return [self.labels == k for k in range(self.num_labels)]

    def _check(self, label: int):
        if not 0 <= label < self.num_labels:
            raise SuperpixelError(f"label {label} out of range [0, {self.num_labels})")

    def boundaries(self) -> np.ndarray:
        """Pixels with a 4-neighbour of a different label."""
        lab = self.labels
        edge = np.zeros(lab.shape, dtype=bool)
        dv = lab[1:] != lab[:-1]
        dh = lab[:, 1:] != lab[:, :-1]
        edge[1:] |= dv
        edge[:-1] |= dv
        edge[:, 1:] |= dh
        edge[:, :-1] |= dh
        return edge


@dataclass(frozen=True)
class SuperpixelPatch:
    """Masked crop of one superpixel.

    ``offset`` is the crop origin ``(x, y)`` in full-image pixels and
    ``label`` the source superpixel.
    """

    image: np.ndarray
    mask: np.ndarray
    offset: tuple[int, int]
    label: int = -1

    @property
    def full_size(self) -> tuple[int, int]:
        h, w = self.mask.shape
        return w, h

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))


def _grid_shape(n: int, h: int, w: int) -> tuple[int, int]:
    # Closest rows x cols to n whose cells are nearly square; ties favour more columns.
    best = None
    for rows in range(1, n + 1):
        cols = max(1, int(round(n / rows)))
        key = (abs(rows * cols - n), abs(math.log((w / cols) / (h / rows))), rows)
        if best is None or key < best[0]:
            best = (key, rows, cols)
    return best[1], best[2]


def _perturb(centers: np.ndarray, lab: np.ndarray) -> np.ndarray:
    h, w = lab.shape[:2]
    gy = np.zeros((h, w))
    gx = np.zeros((h, w))
    gy[1:-1] = np.sum((lab[2:] - lab[:-2]) ** 2, axis=-1)
    gx[:, 1:-1] = np.sum((lab[:, 2:] - lab[:, :-2]) ** 2, axis=-1)
    grad = gx + gy
    out = centers.copy()
    for k, (r, c) in enumerate(centers.astype(int)):
        r0, r1 = max(r - 1, 0), min(r + 2, h)
        c0, c1 = max(c - 1, 0), min(c + 2, w)
        win = grad[r0:r1, c0:c1]
        dr, dc = np.unravel_index(np.argmin(win), win.shape)
        out[k] = (r0 + dr, c0 + dc)
    return out


def _as_lab(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] == 0 or image.shape[1] == 0:
        raise SuperpixelError(f"expected a non-empty (h, w, 3) image, got {image.shape}")
    return rgb2lab(np.clip(image, 0.0, 1.0))


def slic_decompose(image: np.ndarray, n_superpixels: int, compactness: float = 30.0,
                   iterations: int = 10) -> SuperpixelMap:
    """Partition ``image`` into about ``n_superpixels`` 4-connected regions."""
    lab = _as_lab(image)
    h, w = lab.shape[:2]
    if n_superpixels < 1:
        raise SuperpixelError("n_superpixels must be at least 1")
    if n_superpixels > h * w:
        raise SuperpixelError(f"{n_superpixels} superpixels requested for {h * w} pixels")
    if compactness <= 0:
        raise SuperpixelError("compactness must be positive")
    if n_superpixels == 1:
        return SuperpixelMap.from_labels(np.zeros((h, w), dtype=np.int32))

    step = math.sqrt(h * w / n_superpixels)
    rows, cols = _grid_shape(n_superpixels, h, w)
    rr = (np.arange(rows) + 0.5) * h / rows
    cc = (np.arange(cols) + 0.5) * w / cols
    pos = np.stack(np.meshgrid(rr, cc, indexing="ij"), axis=-1).reshape(-1, 2)
    pos = _perturb(np.floor(pos), lab)
    colors = lab[pos[:, 0].astype(int), pos[:, 1].astype(int)].copy()
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    spatial = (compactness / step) ** 2
    reach = int(math.ceil(step))

    labels = np.full((h, w), -1, dtype=np.int32)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        for k in range(len(pos)):
            r, c = pos[k]
            r0, r1 = max(int(r) - reach, 0), min(int(r) + reach + 1, h)
            c0, c1 = max(int(c) - reach, 0), min(int(c) + reach + 1, w)
            d = (np.sum((lab[r0:r1, c0:c1] - colors[k]) ** 2, axis=-1)
                 + spatial * ((yy[r0:r1, c0:c1] - r) ** 2 + (xx[r0:r1, c0:c1] - c) ** 2))
            win = dist[r0:r1, c0:c1]
            better = d < win
            win[better] = d[better]
            labels[r0:r1, c0:c1][better] = k
        if np.any(labels < 0):
            labels = _fill_unlabeled(labels)
        counts = np.bincount(labels.ravel(), minlength=len(pos)).astype(float)
        keep = counts > 0
        flat = labels.ravel()
        for arr, src in ((pos, np.stack([yy.ravel(), xx.ravel()], 1)), (colors, lab.reshape(-1, 3))):
            sums = np.zeros_like(arr)
            for d in range(arr.shape[1]):
                sums[:, d] = np.bincount(flat, weights=src[:, d], minlength=len(pos))
            arr[keep] = sums[keep] / counts[keep, None]
    return SuperpixelMap.from_labels(enforce_connectivity(labels))


def _fill_unlabeled(labels: np.ndarray) -> np.ndarray:
    _, idx = ndimage.distance_transform_edt(labels < 0, return_indices=True)
    return labels[idx[0], idx[1]]


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Merge every non-principal component into its largest neighbouring label.

    The principal component of a label is its largest 4-connected piece.
    """
    labels = np.array(labels, dtype=np.int32, copy=True)
    while True:
        orphans = []
        for k in np.unique(labels):
            pieces, n = ndimage.label(labels == k, structure=_FOUR)
            if n <= 1:
                continue
            sizes = np.bincount(pieces.ravel())[1:]
            main = int(np.argmax(sizes)) + 1
            for p, sl in enumerate(ndimage.find_objects(pieces), start=1):
                if p != main:
                    orphans.append((sizes[p - 1], k, sl, pieces, p))
        if not orphans:
            return labels
        sizes = np.bincount(labels.ravel())
        orphans.sort(key=lambda o: o[0])
        for _, k, sl, pieces, p in orphans:
            r0, r1 = max(sl[0].start - 1, 0), sl[0].stop + 1
            c0, c1 = max(sl[1].start - 1, 0), sl[1].stop + 1
            piece = pieces[r0:r1, c0:c1] == p
            ring = ndimage.binary_dilation(piece, structure=_FOUR) & ~piece
            neighbours = np.unique(labels[r0:r1, c0:c1][ring])
            neighbours = neighbours[neighbours != k]
            if neighbours.size == 0:
                continue
            target = neighbours[np.argmax(sizes[neighbours])]
            labels[r0:r1, c0:c1][piece] = target
            sizes[target] += piece.sum()
            sizes[k] -= piece.sum()


def extract_patch(image: np.ndarray, spmap: SuperpixelMap, label: int, pad: int = 0) -> SuperpixelPatch:
    """Crop ``label``'s bounding box (grown by ``pad`` pixels) and zero non-mask pixels."""
    spmap._check(label)
    image = np.asarray(image, dtype=float)
    if image.shape[:2] != spmap.shape:
        raise SuperpixelError(f"image {image.shape[:2]} does not match label map {spmap.shape}")
    h, w = spmap.shape
    r0, r1, c0, c1 = spmap.bboxes[label]
    r0, c0 = max(r0 - pad, 0), max(c0 - pad, 0)
    r1, c1 = min(r1 + pad, h), min(c1 + pad, w)
    mask = spmap.labels[r0:r1, c0:c1] == label
    crop = image[r0:r1, c0:c1] * (mask[..., None] if image.ndim == 3 else mask)
    return SuperpixelPatch(crop, mask, (int(c0), int(r0)), int(label))


def place_patch(canvas: np.ndarray, patch: SuperpixelPatch) -> np.ndarray:
    """Add a patch's masked pixels back into ``canvas`` at its offset (in place)."""
    x, y = patch.offset
    w, h = patch.full_size
    canvas[y:y + h, x:x + w] += patch.image
    return canvas


def decompose(image: np.ndarray, cfg: SuperpixelConfig, total_paths: Optional[int] = None) -> SuperpixelMap:
    """Dispatch on ``cfg.backend``; only SLIC is available."""
    if cfg.backend is not SuperpixelBackend.SLIC:
        raise NotImplementedError(f"superpixel backend {cfg.backend.value!r} is not implemented")
    n = cfg.n_superpixels
    if n is None:
        if total_paths is None:
            raise SuperpixelError("need n_superpixels or a path budget")
        n = superpixel_count(total_paths, cfg.paths_per_superpixel)
    return slic_decompose(image, n, cfg.compactness, cfg.iterations)


def isoperimetric_quotients(spmap: SuperpixelMap) -> np.ndarray:
    """``4 pi A / P**2`` per region, using scikit-image's perimeter estimate."""
    from skimage.measure import regionprops

    out = []
    for rp in regionprops(spmap.labels + 1):
        per = rp.perimeter
        out.append(4.0 * math.pi * rp.area / per ** 2 if per > 0 else 1.0)
    return np.asarray(out)


def save_label_png(spmap: SuperpixelMap, path, seed: int = 0) -> None:
    """Write the label map as a palette PNG (label count capped at 256 colours)."""
    from PIL import Image

    rng = np.random.default_rng(seed)
    palette = rng.integers(0, 256, size=(256, 3), dtype=np.uint8)
    img = Image.fromarray((spmap.labels % 256).astype(np.uint8), mode="P")
    img.putpalette(palette.ravel().tolist())
    img.save(path, format="PNG")


def save_boundary_overlay(image: np.ndarray, spmap: SuperpixelMap, path,
                          color=(1.0, 0.0, 0.0)) -> None:
    """Write ``image`` with superpixel borders painted in ``color``."""
    from .raster import save_png

    out = np.array(image, dtype=float, copy=True)
    out[spmap.boundaries()] = color
    save_png(out, path)
