"""Raster primitives: grid validation, 3x3 correlation, thresholding and file I/O.

Grids are plain 2-D numpy arrays. Float grids are ``float64``; binary masks are
``uint8`` holding only 0 and 1. Pixel coordinates follow ``(a, b) = (column, row)``
with the origin at the top-left corner and ``b`` growing downward.
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image

__all__ = [
    "SOBEL_H",
    "SOBEL_V",
    "LAPLACIAN",
    "RasterIOError",
    "as_float_grid",
    "as_mask",
    "convolve3x3",
    "binarize",
    "read_image",
    "write_image",
    "read_mask",
    "write_mask",
    "pixel_coords",
]

SOBEL_H = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_V = SOBEL_H.T.copy()
LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

RAW_MAGIC = b"ERSR"
RAW_HEADER = struct.Struct("<4sII")
# Largest grid we agree to allocate from a file header (keeps a corrupt header
# from requesting gigabytes).
MAX_PIXELS = 1 << 28


class RasterIOError(OSError):
    """Raised when a raster file cannot be parsed or holds invalid values."""


def as_float_grid(grid, *, probability: bool = False) -> np.ndarray:
    """Validate ``grid`` and return it as a 2-D float64 array."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("grid contains non-finite values")
    if probability and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("probability map values must lie in [0, 1]")
    return arr


def as_mask(mask) -> np.ndarray:
    """Validate ``mask`` and return it as a 2-D uint8 array of zeros and ones."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D mask, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8)


def pixel_coords(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(a, b)`` coordinate grids (column index, row index) of shape (h, w)."""
    b, a = np.mgrid[0:h, 0:w]
    return a.astype(np.float64), b.astype(np.float64)


def convolve3x3(grid, kernel) -> np.ndarray:
    """Correlate ``grid`` with a 3x3 ``kernel`` under replicate padding.

    out[i, j] = sum_{di, dj} kernel[di + 1, dj + 1] * padded[i + di, j + dj]
    """
    g = as_float_grid(grid)
    k = np.asarray(kernel, dtype=np.float64)
    if k.shape != (3, 3):
        raise ValueError(f"kernel must be 3x3, got {k.shape}")
    h, w = g.shape
    padded = np.pad(g, 1, mode="edge")
    out = np.zeros_like(g)
    for di in range(3):
        for dj in range(3):
            if k[di, dj] != 0.0:
                out += k[di, dj] * padded[di : di + h, dj : dj + w]
    return out


def binarize(p, tau: float = 0.5) -> np.ndarray:
    """Threshold a probability map: 1 where ``p > tau`` (strict), else 0."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return (as_float_grid(p) > tau).astype(np.uint8)


def _ext(path) -> str:
    return os.path.splitext(os.fspath(path))[1].lower()


def _read_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < RAW_HEADER.size:
        raise RasterIOError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, h, w = RAW_HEADER.unpack_from(blob)
    if magic != RAW_MAGIC:
        raise RasterIOError(f"{path}: bad magic {magic!r}, expected {RAW_MAGIC!r}")
    if h < 1 or w < 1:
        raise RasterIOError(f"{path}: invalid dimensions {h}x{w}")
    if h * w > MAX_PIXELS:
        raise RasterIOError(f"{path}: dimensions {h}x{w} overflow the pixel limit")
    expected = RAW_HEADER.size + 4 * h * w
    if len(blob) != expected:
        raise RasterIOError(
            f"{path}: payload size mismatch for {h}x{w} (got {len(blob)} bytes, expected {expected})"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=RAW_HEADER.size).reshape(h, w)
    if not np.all(np.isfinite(data)):
        raise RasterIOError(f"{path}: non-finite value in payload")
    if data.min() < 0.0 or data.max() > 1.0:
        raise RasterIOError(f"{path}: value out of range [0, 1]")
    return data.astype(np.float64)


def _write_raw(grid: np.ndarray, path) -> None:
    h, w = grid.shape
    payload = np.ascontiguousarray(grid, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(RAW_MAGIC, h, w))
        fh.write(payload)


def _read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "1", "P"):
                raise RasterIOError(f"{path}: expected single-channel 8-bit image, got mode {im.mode}")
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except RasterIOError:
        raise
    except (OSError, ValueError) as exc:
        raise RasterIOError(f"{path}: cannot decode image ({exc})") from exc
    return arr


def read_image(path) -> np.ndarray:
    """Read a float grid from an ``.ersrf32`` raw file or an 8-bit PNG (``v / 255``)."""
    if _ext(path) == ".ersrf32":
        return _read_raw(path)
    return _read_png(path).astype(np.float64) / 255.0


def write_image(grid, path) -> None:
    """Write ``grid`` as raw float32 (``.ersrf32``) or as 8-bit PNG (rounded ``v * 255``)."""
    g = as_float_grid(grid, probability=True)
    if _ext(path) == ".ersrf32":
        _write_raw(g, path)
        return
    Image.fromarray(np.rint(g * 255.0).astype(np.uint8)).save(path)


def read_mask(path, tau: float = 0.5) -> np.ndarray:
    """Read a hard mask. PNG pixels >= 128 are foreground; raw maps are thresholded at ``tau``."""
    if _ext(path) == ".ersrf32":
        return binarize(_read_raw(path), tau)
    return (_read_png(path) >= 128).astype(np.uint8)


def write_mask(mask, path) -> None:
    """Write a binary mask as PNG with 0 background and 255 foreground."""
    m = as_mask(mask)
    Image.fromarray((m * 255).astype(np.uint8)).save(path)
