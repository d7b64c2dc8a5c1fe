import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cxrscore import imgproc
from cxrscore.errors import EmptyMaskError, InvalidInputError
from cxrscore.imgproc import ClaheParams

import oracles

images = arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24)))
small_masks = arrays(np.uint8, st.tuples(st.integers(1, 14), st.integers(1, 14)),
                     elements=st.integers(0, 1))


def ring(shape, center, r_out, r_in):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    d2 = (yy - center[0]) ** 2 + (xx - center[1]) ** 2
    return ((d2 <= r_out ** 2) & (d2 > r_in ** 2)).astype(np.uint8)


def filled(shape, center, r):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return (((yy - center[0]) ** 2 + (xx - center[1]) ** 2) <= r ** 2).astype(np.uint8)


# --- equalize_hist ----------------------------------------------------------

def test_equalize_constant_image():
    out = imgproc.equalize_hist(np.full((5, 7), 80, np.uint8))
    assert out.shape == (5, 7)
    assert len(np.unique(out)) == 1


def test_equalize_preserves_order_2x2():
    img = np.array([[0, 85], [170, 255]], np.uint8)
    out = imgproc.equalize_hist(img).ravel()
    assert list(out) == sorted(out)


def test_equalize_uniform_ramp_is_identity():
    ramp = np.arange(256, dtype=np.uint8)[None, :]
    # cdf(v) = v + 1, cdf_min = 1, N = 256  ->  255 * v / 255 = v
    expected = np.array([round(255 * ((v + 1) - 1) / (256 - 1)) for v in range(256)])
    out = imgproc.equalize_hist(ramp)
    assert np.array_equal(out[0], expected)
    assert np.array_equal(out, ramp)


def test_equalize_zero_area():
    with pytest.raises(InvalidInputError):
        imgproc.equalize_hist(np.zeros((0, 4), np.uint8))


@given(images)
def test_equalize_monotone_and_in_range(img):
    out = imgproc.equalize_hist(img)
    assert out.shape == img.shape and out.dtype == np.uint8
    order = np.argsort(img.ravel(), kind="stable")
    assert np.all(np.diff(out.ravel()[order].astype(int)) >= 0)


# --- clahe ------------------------------------------------------------------

def test_clahe_constant_image():
    out = imgproc.clahe(np.full((40, 33), 120, np.uint8))
    assert out.shape == (40, 33)
    assert len(np.unique(out)) == 1


def test_clahe_without_clipping_matches_unclipped_oracle():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (32, 48), dtype=np.uint8)
    grid = (2, 3)
    tile_pixels = 16 * 16
    out = imgproc.clahe(img, ClaheParams(grid, clip_factor=tile_pixels))
    assert np.array_equal(out, oracles.unclipped_ahe(img, grid))
    assert np.array_equal(out, imgproc.clahe(img, ClaheParams(grid), clip=False))


def test_clahe_interior_pixels_bounded_by_tile_mappings():
    rng = np.random.default_rng(11)
    img = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    params = ClaheParams((2, 2), 2.0)
    luts = imgproc.clahe_tile_luts(img, params)
    out = imgproc.clahe(img, params)
    for y in range(16):
        for x in range(16):
            mapped = [luts[r, c, img[y, x]] for r in (0, 1) for c in (0, 1)]
            assert min(mapped) <= out[y, x] <= max(mapped)


def test_clahe_histogram_clipping_rule():
    hist = np.zeros(256, np.int64)
    hist[10] = 100
    hist[20] = 5
    out = imgproc.clip_histogram(hist, 8)
    # excess 92 -> 0 per bin, remainder 92 to bins 0..91
    assert out.sum() == hist.sum()
    assert out[10] == 9 and out[20] == 6 and out[91] == 1 and out[92] == 0


@pytest.mark.parametrize("params", [((0, 8), 2.0), ((8, 8), 0.5)])
def test_clahe_invalid_params(params):
    with pytest.raises(InvalidInputError):
        ClaheParams(*params)


def test_clahe_image_smaller_than_grid():
    with pytest.raises(InvalidInputError):
        imgproc.clahe(np.zeros((4, 4), np.uint8), ClaheParams((8, 8)))


@settings(max_examples=40)
@given(arrays(np.uint8, st.tuples(st.integers(8, 40), st.integers(8, 40))))
def test_clahe_keeps_shape(img):
    out = imgproc.clahe(img)
    assert out.shape == img.shape and out.dtype == np.uint8


# --- threshold --------------------------------------------------------------

def test_threshold_boundary_inclusive():
    assert list(imgproc.threshold_mask(np.array([[0.49, 0.5, 0.51]]))[0]) == [0, 1, 1]
    assert not imgproc.threshold_mask(np.zeros((3, 3))).any()
    assert imgproc.threshold_mask(np.ones((3, 3))).all()


@pytest.mark.parametrize("bad", [-0.1, 1.2, np.nan])
def test_threshold_out_of_range(bad):
    with pytest.raises(InvalidInputError):
        imgproc.threshold_mask(np.array([[0.2, bad]]))


# --- closing ----------------------------------------------------------------

def test_close_solid_rectangle_unchanged():
    m = np.zeros((20, 20), np.uint8)
    m[4:15, 3:17] = 1
    assert np.array_equal(imgproc.morph_close(m, 3), m)


def test_close_removes_small_hole():
    m = np.zeros((24, 24), np.uint8)
    m[3:21, 3:21] = 1
    m[11:13, 11:13] = 0
    out = imgproc.morph_close(m, 3)
    assert np.array_equal(out, oracles.brute_close(m, 3))
    assert out[11:13, 11:13].all()


def test_close_empty_and_bad_radius():
    assert not imgproc.morph_close(np.zeros((5, 5), np.uint8)).any()
    with pytest.raises(InvalidInputError):
        imgproc.morph_close(np.zeros((5, 5), np.uint8), 0)


@settings(max_examples=30, deadline=None)
@given(small_masks, st.integers(1, 3))
def test_close_matches_brute_force(mask, radius):
    assert np.array_equal(imgproc.morph_close(mask, radius), oracles.brute_close(mask, radius))


@settings(max_examples=60, deadline=None)
@given(small_masks, st.integers(1, 4))
def test_close_extensive_and_idempotent(mask, radius):
    once = imgproc.morph_close(mask, radius)
    assert np.all(once >= mask)
    assert np.array_equal(imgproc.morph_close(once, radius), once)


# --- fill_holes -------------------------------------------------------------

def test_fill_donut():
    donut = ring((21, 21), (10, 10), 8, 4)
    assert np.array_equal(imgproc.fill_holes(donut), filled((21, 21), (10, 10), 8))


def test_fill_border_connected_background_unchanged():
    m = np.zeros((10, 10), np.uint8)
    m[:, 4] = 1
    m[2, :] = 1
    assert np.array_equal(imgproc.fill_holes(m), m)


def test_fill_two_rings():
    m = ring((20, 40), (10, 10), 7, 3) | ring((20, 40), (10, 29), 6, 2)
    expected = oracles.flood_fill_holes(m)
    assert np.array_equal(imgproc.fill_holes(m), expected)
    assert np.array_equal(expected, filled((20, 40), (10, 10), 7) | filled((20, 40), (10, 29), 6))


@given(small_masks)
def test_fill_properties(mask):
    out = imgproc.fill_holes(mask)
    assert np.array_equal(out, oracles.flood_fill_holes(mask))
    assert np.all(out >= mask)
    assert np.array_equal(imgproc.fill_holes(out), out)
    assert len(oracles.components(out)) <= len(oracles.components(mask))


# --- keep_largest_components ------------------------------------------------

def test_keep_two_of_three_blobs():
    m = np.zeros((40, 40), np.uint8)
    m[1:11, 1:11] = 1       # 100
    m[20:25, 20:30] = 1     # 50
    m[35:37, 1:6] = 1       # 10
    out = imgproc.keep_largest_components(m, 2)
    comps = sorted(oracles.components(m), key=lambda c: (-len(c[1]), c[0]))
    expected = np.zeros_like(m)
    for _, pix in comps[:2]:
        for y, x in pix:
            expected[y, x] = 1
    assert np.array_equal(out, expected)
    assert not out[35:37, 1:6].any()


def test_keep_single_and_empty():
    m = np.zeros((6, 6), np.uint8)
    assert np.array_equal(imgproc.keep_largest_components(m), m)
    m[1:3, 1:3] = 1
    assert np.array_equal(imgproc.keep_largest_components(m), m)


def test_keep_ties_prefer_earlier_raster_position():
    m = np.zeros((5, 9), np.uint8)
    m[0, 0] = m[0, 4] = m[4, 8] = 1
    out = imgproc.keep_largest_components(m, 2)
    assert out[0, 0] == 1 and out[0, 4] == 1 and out[4, 8] == 0


@given(small_masks, st.integers(1, 3))
def test_keep_is_subset(mask, k):
    out = imgproc.keep_largest_components(mask, k)
    assert np.all(out <= mask)
    assert len(oracles.components(out)) == min(k, len(oracles.components(mask)))


# --- crop -------------------------------------------------------------------

def test_crop_full_frame():
    img = np.arange(20, dtype=np.uint8).reshape(4, 5)
    assert np.array_equal(imgproc.apply_mask_and_crop(img, np.ones((4, 5), np.uint8)), img)


def test_crop_central_square():
    img = np.full((10, 10), 200, np.uint8)
    m = np.zeros((10, 10), np.uint8)
    m[3:7, 3:7] = 1
    out = imgproc.apply_mask_and_crop(img, m)
    assert out.shape == (4, 4) and (out == 200).all()


def test_crop_margin_clamped():
    img = np.full((10, 12), 9, np.uint8)
    m = np.zeros((10, 12), np.uint8)
    m[1:4, 8:11] = 1
    out = imgproc.apply_mask_and_crop(img, m, margin=3)
    ys, xs = np.nonzero(m)
    top, bottom = max(0, ys.min() - 3), min(10, ys.max() + 4)
    left, right = max(0, xs.min() - 3), min(12, xs.max() + 4)
    assert out.shape == (bottom - top, right - left) == (7, 7)
    assert out.sum() == 9 * m.sum()


def test_crop_errors():
    with pytest.raises(EmptyMaskError):
        imgproc.apply_mask_and_crop(np.zeros((3, 3), np.uint8), np.zeros((3, 3), np.uint8))
    with pytest.raises(InvalidInputError):
        imgproc.apply_mask_and_crop(np.zeros((3, 3), np.uint8), np.ones((3, 4), np.uint8))


# --- resize -----------------------------------------------------------------

def test_resize_identity_and_constant():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (7, 9), dtype=np.uint8)
    assert np.array_equal(imgproc.resize_bilinear(img, 9, 7), img)
    assert (imgproc.resize_bilinear(np.full((5, 5), 42, np.uint8), 13, 3) == 42).all()


def test_resize_two_to_three():
    # corner-aligned: x = 0, 0.5, 1 -> 0, 127.5, 255 -> half-up rounding
    out = imgproc.resize_bilinear(np.array([[0, 255]], np.uint8), 3, 1)
    assert list(out[0]) == [0, 128, 255]


def test_resize_zero_target():
    with pytest.raises(InvalidInputError):
        imgproc.resize_bilinear(np.zeros((2, 2), np.uint8), 0, 4)


# --- dice -------------------------------------------------------------------

def test_dice_identities():
    a = np.zeros((4, 4), np.uint8)
    a[0, :] = 1
    b = np.zeros((4, 4), np.uint8)
    b[3, :] = 1
    assert imgproc.dice(a, a) == 1.0
    assert imgproc.dice(a, b) == 0.0
    assert imgproc.dice(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0


def test_dice_partial_overlap():
    a = np.array([[1, 1, 1, 1]], np.uint8)
    b = np.array([[1, 1, 0, 0]], np.uint8)
    assert imgproc.dice(a, b) == pytest.approx(2 * 2 / (4 + 2), abs=1e-9)
    assert imgproc.dice(a, b) == pytest.approx(0.6667, abs=1e-4)


def test_dice_shape_mismatch():
    with pytest.raises(InvalidInputError):
        imgproc.dice(np.zeros((2, 2)), np.zeros((2, 3)))


@given(small_masks, small_masks)
def test_dice_bounds_and_symmetry(a, b):
    if a.shape != b.shape:
        return
    d = imgproc.dice(a, b)
    assert 0.0 <= d <= 1.0
    assert d == imgproc.dice(b, a)
    if a.any():
        assert imgproc.dice(a, a) == 1.0
