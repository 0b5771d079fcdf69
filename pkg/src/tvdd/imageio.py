"""Grayscale image loading and saving (PGM, PNG and whatever Pillow reads)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageError(OSError):
    """The file could not be read or written as an image."""


def load_image(path) -> np.ndarray:
    """Read an image as a float array with intensities in ``[0, 1]``.

    Colour images are converted to luminance; 16-bit data keeps its range.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                top = 65535.0 if im.mode.startswith("I;16") else max(float(arr.max()), 1.0)
                return np.clip(arr / top, 0.0, 1.0)
            if im.mode == "F":
                return np.clip(np.asarray(im, dtype=np.float64), 0.0, 1.0)
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"cannot read image {path}: {exc}") from exc


def to_uint8(u) -> np.ndarray:
    return np.round(np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(u, path) -> None:
    """Clamp to ``[0, 1]``, quantise to 8 bits and write; format from the suffix.

    ``u`` may be ``(n1, n2)``, ``(n1, n2, 1)`` or an RGB ``(n1, n2, 3)`` array.
    """
    path = Path(path)
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim not in (2, 3):
        raise ImageError(f"cannot save array of shape {arr.shape} as an image")
    mode = "L" if arr.ndim == 2 else "RGB"
    fmt = {".pgm": "PPM", ".ppm": "PPM", ".png": "PNG"}.get(path.suffix.lower())
    if fmt is None:
        raise ImageError(f"unsupported image format {path.suffix!r}")
    if fmt == "PPM" and mode == "RGB" and path.suffix.lower() == ".pgm":
        raise ImageError("PGM output must be grayscale")
    try:
        Image.fromarray(to_uint8(arr), mode=mode).save(path, format=fmt)
    except OSError as exc:
        raise ImageError(f"cannot write image {path}: {exc}") from exc
