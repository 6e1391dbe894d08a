"""Overlap and surface-distance metrics: Dice, HD95 and ASD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsaf import squared_distance_transform
from .ellipse import boundary_pixels
from .raster import as_mask

__all__ = [
    "MetricUndefined",
    "SurfaceDistanceSet",
    "dice_score",
    "surface",
    "surface_distances",
    "hd95",
    "asd",
]


class MetricUndefined(ValueError):
    """A surface-distance metric was requested for a mask with no surface."""


@dataclass(frozen=True)
class SurfaceDistanceSet:
    a_to_b: np.ndarray
    b_to_a: np.ndarray
    spacing: float = 1.0

    @property
    def pooled(self) -> np.ndarray:
        return np.concatenate([self.a_to_b, self.b_to_a]) * self.spacing


def _pair(a, b):
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def dice_score(a, b) -> float:
    a, b = _pair(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def surface(m) -> np.ndarray:
    """Foreground pixels with a background 4-neighbour."""
    return boundary_pixels(m)


def _directed(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    # Distance from each src surface pixel to the nearest dst surface pixel:
    # the distance transform of "not dst-surface" read at src pixels.
    d2 = squared_distance_transform(1 - dst)
    return np.sqrt(d2[src.astype(bool)])


def surface_distances(a, b, spacing: float = 1.0) -> SurfaceDistanceSet:
    a, b = _pair(a, b)
    sa, sb = surface(a), surface(b)
    return SurfaceDistanceSet(_directed(sa, sb), _directed(sb, sa), spacing)


def _checked(a, b, spacing) -> np.ndarray:
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    sds = surface_distances(a, b, spacing)
    if sds.a_to_b.size == 0 or sds.b_to_a.size == 0:
        raise MetricUndefined("surface distance undefined for an empty mask")
    return sds.pooled


def hd95(a, b, spacing: float = 1.0) -> float:
    """95th percentile (linear interpolation) of the pooled symmetric surface distances."""
    return float(np.percentile(_checked(a, b, spacing), 95))


def asd(a, b, spacing: float = 1.0) -> float:
    """Mean of the pooled symmetric surface distances."""
    return float(np.mean(_checked(a, b, spacing)))
