"""Ellipse-constrained refinement of pseudo-labels.

The dominant 8-connected blob of a thresholded map is fitted with a direct
least-squares ellipse; every pixel is then scored by its normalised elliptical
distance and the map is boosted inside the ellipse and decayed outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import as_float_grid, as_mask, binarize, pixel_coords

__all__ = [
    "EllipseParams",
    "EmptyMask",
    "FitDegenerate",
    "largest_component",
    "label_components",
    "boundary_pixels",
    "boundary_points",
    "fit_conic",
    "conic_to_params",
    "fit_ellipse",
    "moment_ellipse",
    "rotate_coords",
    "elliptical_distance",
    "distance_map",
    "rasterize_ellipse",
    "refine_pseudo_label",
    "Refinement",
    "refine_map",
]

_EIGHT = np.ones((3, 3), dtype=int)


class EmptyMask(ValueError):
    """The mask has no foreground pixels."""


class FitDegenerate(ValueError):
    """Too few or collinear boundary points for an ellipse fit."""


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse with full axis lengths and orientation ``theta`` in degrees, [0, 180)."""

    c_a: float
    c_b: float
    axis_major: float
    axis_minor: float
    theta: float

    def __post_init__(self):
        if not (self.axis_major >= self.axis_minor > 0):
            raise ValueError(
                f"need axis_major >= axis_minor > 0, got {self.axis_major}, {self.axis_minor}"
            )
        object.__setattr__(self, "theta", float(self.theta) % 180.0)

    @property
    def center(self) -> tuple[float, float]:
        return (self.c_a, self.c_b)

    def as_row(self) -> list[float]:
        return [self.c_a, self.c_b, self.axis_major, self.axis_minor, self.theta]


def label_components(m) -> tuple[np.ndarray, dict[int, int]]:
    """8-connected labelling. Returns the label grid and ``{label: pixel count}``."""
    mask = as_mask(m)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    return labels, {k: int(sizes[k]) for k in range(1, n + 1)}


def largest_component(m) -> np.ndarray:
    """Mask of the largest 8-connected component.

    Equal-sized components are ranked by their first pixel in row-major order.
    """
    labels, sizes = label_components(m)
    if not sizes:
        raise EmptyMask("mask has no foreground pixels")
    # ndimage.label numbers components in row-major order of their first pixel,
    # so the smallest label among the largest ones wins the tie.
    best = max(sizes.items(), key=lambda kv: (kv[1], -kv[0]))[0]
    return (labels == best).astype(np.uint8)


def boundary_pixels(m) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbour (outside counts as background)."""
    mask = as_mask(m).astype(bool)
    p = np.pad(mask, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return (mask & ~interior).astype(np.uint8)


def boundary_points(m, subpixel: bool = True) -> np.ndarray:
    """Contour sample points ``(a, b)`` of a mask, shape (n, 2).

    With ``subpixel`` the points are the midpoints of the pixel edges separating
    foreground from background (one per exposed edge); otherwise they are the
    centres of the boundary pixels.
    """
    mask = as_mask(m).astype(bool)
    if not subpixel:
        rows, cols = np.nonzero(boundary_pixels(mask))
        return np.column_stack([cols, rows]).astype(np.float64)
    p = np.pad(mask, 1, constant_values=False)
    pts = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nb = p[1 + dr : 1 + dr + mask.shape[0], 1 + dc : 1 + dc + mask.shape[1]]
        rows, cols = np.nonzero(mask & ~nb)
        pts.append(np.column_stack([cols + 0.5 * dc, rows + 0.5 * dr]))
    return np.concatenate(pts).astype(np.float64)


def fit_conic(points) -> np.ndarray:
    """Direct least-squares ellipse fit; unit-norm conic ``[A, B, C, D, E, F]``.

    Solves min ||D c||^2 subject to 4AC - B^2 = 1, using the partitioned
    scatter matrix so that the 3x3 eigenproblem stays well conditioned. Points
    are centred and scaled before fitting and the conic is mapped back.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
        raise FitDegenerate(f"need at least 5 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)))
    if scale == 0.0:
        raise FitDegenerate("all points coincide")
    x = (pts[:, 0] - mean[0]) / scale
    y = (pts[:, 1] - mean[1]) / scale

    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise FitDegenerate("singular linear scatter (collinear points)") from exc
    m = s1 + s2 @ t
    # Premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    m = np.vstack([m[2] / 2.0, -m[1], m[0] / 2.0])
    evals, evecs = np.linalg.eig(m)
    evecs = np.real(evecs)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.nonzero((cond > 0) & np.isfinite(np.real(evals)))[0]
    if len(ok) == 0:
        raise FitDegenerate("no elliptical solution in the constrained eigenproblem")
    a1 = evecs[:, ok[np.argmin(np.abs(np.real(evals[ok])))]]
    a2 = t @ a1
    A, B, C = a1
    D, E, F = a2
    # Undo x' = (x - mx)/s, y' = (y - my)/s.
    mx, my, s = mean[0], mean[1], scale
    A2, B2, C2 = A / s**2, B / s**2, C / s**2
    D2 = D / s - 2 * A2 * mx - B2 * my
    E2 = E / s - 2 * C2 * my - B2 * mx
    F2 = F + A2 * mx * mx + B2 * mx * my + C2 * my * my - D / s * mx - E / s * my
    coef = np.array([A2, B2, C2, D2, E2, F2])
    return coef / np.linalg.norm(coef)


def conic_to_params(coef) -> EllipseParams:
    """Convert conic coefficients to centre, full axes and orientation."""
    A, B, C, D, E, F = np.asarray(coef, dtype=np.float64)
    if 4.0 * A * C - B * B <= 0:
        raise FitDegenerate("conic is not an ellipse")
    c_a, c_b = np.linalg.solve(np.array([[2 * A, B], [B, 2 * C]]), [-D, -E])
    f0 = F + 0.5 * (D * c_a + E * c_b)
    q = np.array([[A, B / 2.0], [B / 2.0, C]])
    if f0 > 0:
        # Flip the overall sign so that Q is positive definite and f0 < 0.
        q, f0 = -q, -f0
    evals, evecs = np.linalg.eigh(q)
    semi = -f0 / evals
    if np.any(semi <= 0) or not np.all(np.isfinite(semi)):
        raise FitDegenerate("imaginary or degenerate ellipse")
    semi = np.sqrt(semi)
    # eigh sorts ascending, so the smaller eigenvalue (index 0) is the major axis.
    u = evecs[:, 0]
    theta = math.degrees(math.atan2(u[1], u[0])) % 180.0
    return EllipseParams(float(c_a), float(c_b), float(2 * semi[0]), float(2 * semi[1]), theta)


def moment_ellipse(m) -> EllipseParams:
    """Ellipse with the same second moments as the filled foreground region."""
    mask = as_mask(m)
    rows, cols = np.nonzero(mask)
    if len(rows) < 3:
        raise FitDegenerate("too few pixels for a moment ellipse")
    pts = np.column_stack([cols, rows]).astype(np.float64)
    c = pts.mean(axis=0)
    # Pixel footprint adds 1/12 variance per axis.
    cov = np.cov(pts, rowvar=False, bias=True) + np.eye(2) / 12.0
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 1e-12:
        raise FitDegenerate("collinear region")
    u = evecs[:, 1]
    theta = math.degrees(math.atan2(u[1], u[0])) % 180.0
    return EllipseParams(float(c[0]), float(c[1]), float(4 * math.sqrt(evals[1])), float(4 * math.sqrt(evals[0])), theta)


def fit_ellipse(component, subpixel: bool = True) -> EllipseParams:
    """Least-squares ellipse through the contour of a (single-component) mask.

    Falls back to the moment ellipse when the constrained eigen-step yields no
    usable ellipse.
    """
    mask = as_mask(component)
    n_boundary = int(boundary_pixels(mask).sum())
    if n_boundary < 5:
        raise FitDegenerate(f"need at least 5 boundary pixels, got {n_boundary}")
    centres = boundary_points(mask, subpixel=False)
    sv = np.linalg.svd(centres - centres.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise FitDegenerate("boundary pixels are collinear")
    pts = boundary_points(mask, subpixel=subpixel)
    try:
        return conic_to_params(fit_conic(pts))
    except (FitDegenerate, np.linalg.LinAlgError):
        return moment_ellipse(mask)


def rotate_coords(point, e: EllipseParams) -> tuple[float, float]:
    """Coordinates of ``point`` in the ellipse frame (major axis along the first axis)."""
    a, b = point
    t = math.radians(e.theta)
    da, db = a - e.c_a, b - e.c_b
    return (da * math.cos(t) + db * math.sin(t), -da * math.sin(t) + db * math.cos(t))


def elliptical_distance(point, e: EllipseParams) -> float:
    """Normalised distance ``d``; ``d <= 1`` means inside or on the ellipse."""
    a_rot, b_rot = rotate_coords(point, e)
    return (a_rot / (e.axis_major / 2.0)) ** 2 + (b_rot / (e.axis_minor / 2.0)) ** 2


def distance_map(e: EllipseParams, h: int, w: int) -> np.ndarray:
    """:func:`elliptical_distance` evaluated at every pixel centre of an h x w grid."""
    a, b = pixel_coords(h, w)
    t = math.radians(e.theta)
    da, db = a - e.c_a, b - e.c_b
    a_rot = da * math.cos(t) + db * math.sin(t)
    b_rot = -da * math.sin(t) + db * math.cos(t)
    return (a_rot / (e.axis_major / 2.0)) ** 2 + (b_rot / (e.axis_minor / 2.0)) ** 2


def rasterize_ellipse(e: EllipseParams, h: int, w: int) -> np.ndarray:
    """Filled ellipse mask: pixel centres with ``d <= 1``."""
    return (distance_map(e, h, w) <= 1.0).astype(np.uint8)


def refine_pseudo_label(p_selected, e: EllipseParams, beta: float = 0.6, d=None) -> np.ndarray:
    """Enhance inside the ellipse, decay outside it.

    d <= 1: max(p, beta + (1 - d)^2);  d > 1: p * exp(-(d - 1)).  The result is
    clipped to [0, 1]. The rule is discontinuous at d = 1 whenever p < beta.
    ``d`` may be passed to override the per-pixel distance map.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    p = as_float_grid(p_selected, probability=True)
    if d is None:
        d = distance_map(e, *p.shape)
    d = np.broadcast_to(np.asarray(d, dtype=np.float64), p.shape)
    inside = d <= 1.0
    out = np.where(inside, np.maximum(p, beta + (1.0 - d) ** 2), p * np.exp(-(np.maximum(d, 1.0) - 1.0)))
    return np.clip(out, 0.0, 1.0)


@dataclass
class Refinement:
    p_re: np.ndarray
    ellipse: EllipseParams | None
    skipped: bool
    reason: str = ""


def refine_map(p_selected, beta: float = 0.6, tau: float = 0.5) -> Refinement:
    """Threshold, keep the largest blob, fit and refine.

    If the mask is empty or the fit fails, the map is passed through unchanged
    and ``skipped`` is set.
    """
    p = as_float_grid(p_selected, probability=True)
    try:
        comp = largest_component(binarize(p, tau))
        e = fit_ellipse(comp)
    except (EmptyMask, FitDegenerate) as exc:
        return Refinement(p.copy(), None, True, str(exc))
    return Refinement(refine_pseudo_label(p, e, beta), e, False)
