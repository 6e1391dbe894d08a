"""Symmetric random perturbation around an ellipse axis.

Reflection, half-plane splitting, mirrored image composition, mirrored
predictions and the masked decomposition used by the symmetry consistency term.
All resampling is nearest-neighbour; reflected coordinates that fall outside
the grid read as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ellipse import EllipseParams
from .raster import as_float_grid, as_mask, pixel_coords

__all__ = [
    "AXIS_STRATEGIES",
    "SPLIT_MODES",
    "DECOMPOSE_REGIONS",
    "SymmetryAxis",
    "HalfPlaneMasks",
    "AugmentedPair",
    "Perturbation",
    "axis_from_ellipse",
    "reflect_point",
    "reflect_coords",
    "split_halves",
    "compose_symmetric_images",
    "mirror_prediction",
    "decompose_prediction",
]

AXIS_STRATEGIES = ("long", "short", "random", "horizontal", "vertical")
SPLIT_MODES = ("perpendicular", "literal")
DECOMPOSE_REGIONS = ("full", "foreground")
_ON_AXIS_TOL = 1e-9


@dataclass(frozen=True)
class SymmetryAxis:
    """Line through ``(c_a, c_b)`` with direction ``(cos theta, sin theta)``, theta in degrees."""

    c_a: float
    c_b: float
    theta: float
    kind: str = "long"

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % 180.0)

    @property
    def direction(self) -> tuple[float, float]:
        t = math.radians(self.theta)
        return (math.cos(t), math.sin(t))


@dataclass(frozen=True)
class HalfPlaneMasks:
    left: np.ndarray
    right: np.ndarray

    def restrict(self, m) -> "HalfPlaneMasks":
        """Intersect both halves with a foreground mask."""
        mask = as_mask(m)
        return HalfPlaneMasks(self.left & mask, self.right & mask)


@dataclass(frozen=True)
class AugmentedPair:
    x_s1: np.ndarray
    x_s2: np.ndarray
    perturbation_seed: int | None


@dataclass(frozen=True)
class Perturbation:
    """Per-region pixel augmentation: multiplicative jitter then additive Gaussian noise."""

    jitter_low: float = 0.9
    jitter_high: float = 1.1
    noise_sigma: float = 0.02


def axis_from_ellipse(
    e: EllipseParams,
    kind: str = "long",
    rng: np.random.Generator | None = None,
    mask=None,
) -> SymmetryAxis:
    """Build a symmetry axis from a fitted ellipse.

    ``long``/``short`` follow the major/minor axis. ``random`` rotates about the
    centre by a uniform angle. ``horizontal``/``vertical`` place an axis-aligned
    line at a uniform position inside the mask's bounding box (or the ellipse's
    own bounding box when no mask is given).
    """
    if kind not in AXIS_STRATEGIES:
        raise ValueError(f"unknown axis strategy {kind!r}; expected one of {AXIS_STRATEGIES}")
    if kind == "long":
        return SymmetryAxis(e.c_a, e.c_b, e.theta, kind)
    if kind == "short":
        return SymmetryAxis(e.c_a, e.c_b, e.theta + 90.0, kind)
    rng = rng if rng is not None else np.random.default_rng(0)
    if kind == "random":
        return SymmetryAxis(e.c_a, e.c_b, rng.uniform(0.0, 180.0), kind)
    if mask is not None and as_mask(mask).any():
        rows, cols = np.nonzero(as_mask(mask))
        (r0, r1), (c0, c1) = (rows.min(), rows.max()), (cols.min(), cols.max())
    else:
        t = math.radians(e.theta)
        A, B = e.axis_major / 2.0, e.axis_minor / 2.0
        ha = math.hypot(A * math.cos(t), B * math.sin(t))
        hb = math.hypot(A * math.sin(t), B * math.cos(t))
        r0, r1, c0, c1 = e.c_b - hb, e.c_b + hb, e.c_a - ha, e.c_a + ha
    if kind == "horizontal":
        return SymmetryAxis(e.c_a, rng.uniform(r0, r1), 0.0, kind)
    return SymmetryAxis(rng.uniform(c0, c1), e.c_b, 90.0, kind)


def reflect_point(point, axis: SymmetryAxis) -> tuple[float, float]:
    """Mirror ``point`` across the axis line: ``2((x - c).u)u - (x - c) + c``."""
    a, b = point
    ua, ub = axis.direction
    da, db = a - axis.c_a, b - axis.c_b
    proj = da * ua + db * ub
    return (2.0 * proj * ua - da + axis.c_a, 2.0 * proj * ub - db + axis.c_b)


def reflect_coords(axis: SymmetryAxis, h: int, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-pixel reflection of every pixel centre.

    Returns integer row and column index grids plus a validity mask for
    reflections that stay inside the grid (invalid entries are clamped indices).
    """
    a, b = pixel_coords(h, w)
    ua, ub = axis.direction
    da, db = a - axis.c_a, b - axis.c_b
    proj = da * ua + db * ub
    ra = np.rint(2.0 * proj * ua - da + axis.c_a).astype(np.int64)
    rb = np.rint(2.0 * proj * ub - db + axis.c_b).astype(np.int64)
    valid = (ra >= 0) & (ra < w) & (rb >= 0) & (rb < h)
    return np.clip(rb, 0, h - 1), np.clip(ra, 0, w - 1), valid


def _sample_reflected(grid: np.ndarray, rows, cols, valid) -> np.ndarray:
    return np.where(valid, grid[rows, cols], 0)


def split_halves(axis: SymmetryAxis, h: int, w: int, mode: str = "perpendicular") -> HalfPlaneMasks:
    """Partition the grid into the two sides of the axis.

    ``perpendicular`` classifies by the signed offset across the axis (negative
    is left), which is the split that reflection swaps. ``literal`` classifies
    by the along-axis coordinate ``a_rot`` instead.
    """
    if mode not in SPLIT_MODES:
        raise ValueError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")
    a, b = pixel_coords(h, w)
    ua, ub = axis.direction
    da, db = a - axis.c_a, b - axis.c_b
    coord = da * ua + db * ub if mode == "literal" else -da * ub + db * ua
    # Offsets within rounding noise of zero (e.g. cos 90 deg != 0) count as on the axis.
    left = (coord < -_ON_AXIS_TOL).astype(np.uint8)
    return HalfPlaneMasks(left, (1 - left).astype(np.uint8))


def _perturb(values: np.ndarray, rng: np.random.Generator, p: Perturbation) -> np.ndarray:
    gain = rng.uniform(p.jitter_low, p.jitter_high)
    noise = rng.normal(0.0, p.noise_sigma, size=values.shape)
    return np.clip(values * gain + noise, 0.0, 1.0)


def compose_symmetric_images(
    x,
    m,
    axis: SymmetryAxis,
    halves: HalfPlaneMasks,
    seed: int | None = None,
    perturb: bool = True,
    perturbation: Perturbation = Perturbation(),
) -> AugmentedPair:
    """Two images, each built from one foreground half and its mirror image.

    ``x_s1`` keeps the background (``m == 0``), the left foreground half and the
    left half reflected across the axis; ``x_s2`` does the same with the right
    half. Mirrored content is pasted over whatever lies at its destination.
    Foreground pixels that reflect onto themselves (those lying on the axis)
    belong to both halves. With ``perturb`` each half and each mirrored copy
    gets its own intensity jitter and noise drawn from ``seed``.
    """
    img = as_float_grid(x)
    mask = as_mask(m)
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} and mask {mask.shape} differ in shape")
    h, w = img.shape
    rows, cols, valid = reflect_coords(axis, h, w)
    rng = np.random.default_rng(seed) if perturb else None
    r0, c0 = np.indices((h, w))
    on_axis = valid & (rows == r0) & (cols == c0)

    outputs = []
    for side in (halves.left, halves.right):
        fg_half = mask.astype(bool) & (side.astype(bool) | on_axis)
        # Destination pixels whose reflection lands on this foreground half.
        mirrored = _sample_reflected(fg_half, rows, cols, valid).astype(bool)
        kept = img.copy()
        kept[mask.astype(bool) & ~fg_half] = 0.0
        half_vals = img
        mirror_vals = _sample_reflected(img, rows, cols, valid)
        if rng is not None:
            half_vals = _perturb(img, rng, perturbation)
            mirror_vals = _perturb(mirror_vals, rng, perturbation)
        out = np.where(fg_half, half_vals, kept)
        out = np.where(mirrored, mirror_vals, out)
        outputs.append(out)
    return AugmentedPair(outputs[0], outputs[1], seed if perturb else None)


def mirror_prediction(p_o, axis: SymmetryAxis, halves: HalfPlaneMasks) -> tuple[np.ndarray, np.ndarray]:
    """Mirrored predictions: left pixels keep themselves in the first output, right pixels in the second."""
    p = as_float_grid(p_o)
    rows, cols, valid = reflect_coords(axis, *p.shape)
    reflected = _sample_reflected(p, rows, cols, valid)
    left = halves.left.astype(bool)
    return np.where(left, p, reflected), np.where(left, reflected, p)


def decompose_prediction(p_si, axis: SymmetryAxis, halves: HalfPlaneMasks) -> tuple[np.ndarray, np.ndarray]:
    """Left component ``p * left`` and the right side mirrored onto the left, ``p(x') * right(x')``.

    Both components live on the left-side support, so on-axis pixels (which
    reflect onto themselves in the right half) are zero in both.
    """
    p = as_float_grid(p_si)
    rows, cols, valid = reflect_coords(axis, *p.shape)
    p1 = p * halves.left
    p2 = _sample_reflected(p * halves.right, rows, cols, valid) * halves.left
    return p1, p2
