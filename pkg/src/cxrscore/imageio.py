"""Image and mask file I/O."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imgproc import as_mask

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def is_image_file(name) -> bool:
    return Path(str(name)).suffix.lower() in IMAGE_SUFFIXES


def load_gray(path) -> np.ndarray:
    """Read an image as 8-bit grayscale.

    Colour images are converted to luminance. Images with more than 8 bits
    per sample are min-max stretched to [0, 255].
    """
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
            arr = np.asarray(im, dtype=np.float64)
            lo, hi = float(arr.min()), float(arr.max())
            if hi == lo:
                return np.zeros(arr.shape, np.uint8)
            return np.floor((arr - lo) * 255.0 / (hi - lo) + 0.5).astype(np.uint8)
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def save_gray(path, img) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path)


def save_mask(path, mask) -> None:
    """Write a 0/1 mask as 0/255 PNG or PGM, chosen by suffix."""
    save_gray(path, as_mask(mask) * 255)


def load_mask(path) -> np.ndarray:
    return (load_gray(path) > 127).astype(np.uint8)
