"""Deterministic pixel-level preprocessing for chest radiographs.

Images are 2-D ``uint8`` arrays of shape ``(height, width)``; masks are 2-D
``uint8`` arrays holding only 0 (background) and 1 (lung).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .errors import EmptyMaskError, InvalidInputError

FOUR_CONNECTED = ndi.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class ClaheParams:
    tile_grid: tuple[int, int] = (8, 8)
    clip_factor: float = 2.0

    def __post_init__(self):
        rows, cols = self.tile_grid
        if int(rows) < 1 or int(cols) < 1:
            raise InvalidInputError(f"tile grid must be at least 1x1, got {self.tile_grid}")
        if not self.clip_factor >= 1.0:
            raise InvalidInputError(f"clip_factor must be >= 1.0, got {self.clip_factor}")
        object.__setattr__(self, "tile_grid", (int(rows), int(cols)))
        object.__setattr__(self, "clip_factor", float(self.clip_factor))


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise InvalidInputError(f"expected a 2-D grayscale image, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError("image has zero area")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255) or not np.all(np.isfinite(arr)):
            raise InvalidInputError("intensities must lie in [0, 255]")
        arr = np.floor(arr.astype(np.float64) + 0.5).astype(np.uint8)
    return arr


def as_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"expected a 2-D mask, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidInputError("mask must be strictly binary (0/1)")
    return arr.astype(np.uint8)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def equalize_hist(img) -> np.ndarray:
    """Global histogram equalization.

    Uses ``m(v) = round(255 * (cdf(v) - cdf_min) / (N - cdf_min))`` with
    ``cdf_min`` the smallest nonzero CDF value. A single-valued image has no
    spread to redistribute and is returned unchanged.
    """
    img = as_gray(img)
    n = img.size
    hist = np.bincount(img.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    cdf_min = cdf[np.nonzero(cdf)[0][0]]
    if cdf_min == n:
        return img.copy()
    lut = _round_half_up(255.0 * (cdf - cdf_min) / (n - cdf_min))
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[img]


def _tile_geometry(shape, tile_grid):
    h, w = shape
    rows, cols = tile_grid
    if h < rows or w < cols:
        raise InvalidInputError(
            f"image {w}x{h} is smaller than the {rows}x{cols} tile grid"
        )
    tile_h = -(-h // rows)
    tile_w = -(-w // cols)
    return tile_h, tile_w


def _mirror_pad(img, tile_h, tile_w, tile_grid):
    rows, cols = tile_grid
    pad_h = rows * tile_h - img.shape[0]
    pad_w = cols * tile_w - img.shape[1]
    if pad_h == 0 and pad_w == 0:
        return img
    return np.pad(img, ((0, pad_h), (0, pad_w)), mode="symmetric")


def clip_histogram(hist: np.ndarray, clip: int) -> np.ndarray:
    """Clip bins at ``clip`` and spread the excess back uniformly.

    The excess is redistributed in a single pass: every bin receives
    ``excess // nbins`` and the remainder goes one count per bin from bin 0.
    """
    hist = np.asarray(hist, dtype=np.int64)
    excess = int(np.maximum(hist - clip, 0).sum())
    out = np.minimum(hist, clip)
    nbins = out.size
    out += excess // nbins
    out[: excess % nbins] += 1
    return out


def clahe_tile_luts(img, params: ClaheParams | None = None, clip: bool = True) -> np.ndarray:
    """Per-tile lookup tables, shape ``(rows, cols, 256)``.

    With ``clip=False`` the tables are plain per-tile equalization mappings.
    """
    params = params or ClaheParams()
    img = as_gray(img)
    tile_h, tile_w = _tile_geometry(img.shape, params.tile_grid)
    padded = _mirror_pad(img, tile_h, tile_w, params.tile_grid)
    rows, cols = params.tile_grid
    tile_pixels = tile_h * tile_w
    clip_limit = max(1, int(params.clip_factor * tile_pixels / 256))

    luts = np.empty((rows, cols, 256), dtype=np.float64)
    scale = 255.0 / tile_pixels
    for r in range(rows):
        for c in range(cols):
            tile = padded[r * tile_h:(r + 1) * tile_h, c * tile_w:(c + 1) * tile_w]
            hist = np.bincount(tile.ravel(), minlength=256)
            if clip:
                hist = clip_histogram(hist, clip_limit)
            luts[r, c] = np.clip(_round_half_up(np.cumsum(hist) * scale), 0, 255)
    return luts


def _interp_axis(n_pixels, tile_size, n_tiles):
    # position relative to tile centres, clamped at the outer centres
    pos = (np.arange(n_pixels) + 0.5) / tile_size - 0.5
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    hi = lo + 1
    lo_c = np.clip(lo, 0, n_tiles - 1)
    hi_c = np.clip(hi, 0, n_tiles - 1)
    frac = np.where(lo_c == hi_c, 0.0, frac)
    return lo_c, hi_c, frac


def clahe(img, params: ClaheParams | None = None, clip: bool = True) -> np.ndarray:
    """Contrast limited adaptive histogram equalization.

    Each output pixel bilinearly blends the mappings of the four nearest tile
    centres (clamped at the image border).
    """
    params = params or ClaheParams()
    img = as_gray(img)
    luts = clahe_tile_luts(img, params, clip=clip)
    tile_h, tile_w = _tile_geometry(img.shape, params.tile_grid)
    rows, cols = params.tile_grid
    h, w = img.shape

    y0, y1, wy = _interp_axis(h, tile_h, rows)
    x0, x1, wx = _interp_axis(w, tile_w, cols)
    y0, y1, wy = y0[:, None], y1[:, None], wy[:, None]
    x0, x1, wx = x0[None, :], x1[None, :], wx[None, :]

    top = (1 - wx) * luts[y0, x0, img] + wx * luts[y0, x1, img]
    bottom = (1 - wx) * luts[y1, x0, img] + wx * luts[y1, x1, img]
    out = (1 - wy) * top + wy * bottom
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def threshold_mask(prob_map, threshold: float = 0.5) -> np.ndarray:
    probs = np.asarray(prob_map, dtype=np.float64)
    if not np.all((probs >= 0.0) & (probs <= 1.0)):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    return (probs >= threshold).astype(np.uint8)


def disk(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return (xx * xx + yy * yy <= radius * radius).astype(bool)


def morph_close(mask, radius: int = 5) -> np.ndarray:
    """Binary closing with a disk, treating everything outside the frame as background.

    The mask is zero-padded by ``radius`` so the dilation sees the full
    neighbourhood; this keeps the operation extensive at the image border.
    """
    if radius < 1:
        raise InvalidInputError(f"closing radius must be >= 1, got {radius}")
    mask = as_mask(mask)
    if not mask.any():
        return mask.copy()
    se = disk(radius)
    padded = np.pad(mask.astype(bool), radius)
    dilated = ndi.binary_dilation(padded, structure=se, border_value=0)
    closed = ndi.binary_erosion(dilated, structure=se, border_value=1)
    return closed[radius:-radius, radius:-radius].astype(np.uint8)


def fill_holes(mask) -> np.ndarray:
    """Set to 1 every background pixel not 4-connected to the image border."""
    mask = as_mask(mask)
    background, _ = ndi.label(mask == 0, structure=FOUR_CONNECTED)
    border_labels = np.unique(np.concatenate([
        background[0, :], background[-1, :], background[:, 0], background[:, -1],
    ]))
    outside = np.isin(background, border_labels[border_labels > 0])
    return (~outside).astype(np.uint8)


def keep_largest_components(mask, k: int = 2) -> np.ndarray:
    """Keep the ``k`` largest 4-connected components.

    Equal sizes are ordered by the raster index of each component's first
    pixel, which is also the order in which ``ndimage.label`` numbers them.
    """
    mask = as_mask(mask)
    labels, n = ndi.label(mask, structure=FOUR_CONNECTED)
    if n <= k:
        return mask.copy()
    sizes = np.bincount(labels.ravel())[1:]
    order = sorted(range(n), key=lambda i: (-sizes[i], i))
    keep = np.array(order[:k]) + 1
    return np.isin(labels, keep).astype(np.uint8)


def mask_bbox(mask, margin: int = 0) -> tuple[int, int, int, int]:
    """Return ``(top, bottom, left, right)`` with exclusive bottom/right."""
    mask = as_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    h, w = mask.shape
    return (
        max(0, rows[0] - margin),
        min(h, rows[-1] + 1 + margin),
        max(0, cols[0] - margin),
        min(w, cols[-1] + 1 + margin),
    )


def apply_mask_and_crop(img, mask, margin: int = 0) -> np.ndarray:
    img = as_gray(img)
    mask = as_mask(mask)
    if img.shape != mask.shape:
        raise InvalidInputError(f"image shape {img.shape} does not match mask shape {mask.shape}")
    top, bottom, left, right = mask_bbox(mask, margin)
    masked = np.where(mask == 1, img, 0).astype(np.uint8)
    return masked[top:bottom, left:right].copy()


def _sample_positions(n_in, n_out):
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def resize_float(arr, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D float array."""
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"target size must be positive, got {out_w}x{out_h}")
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    ys = _sample_positions(h, out_h)
    xs = _sample_positions(w, out_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = (1 - wx) * arr[y0][:, x0] + wx * arr[y0][:, x1]
    bottom = (1 - wx) * arr[y1][:, x0] + wx * arr[y1][:, x1]
    return (1 - wy) * top + wy * bottom


def resize_bilinear(img, out_w: int, out_h: int) -> np.ndarray:
    img = as_gray(img)
    out = resize_float(img, out_w, out_h)
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def dice(a, b) -> float:
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total
