"""Dual-scoring adaptive filtering of teacher probability maps.

Each map gets a boundary score (mean Sobel gradient magnitude) and a contour
score (mean absolute Laplacian of the distance transform of its thresholded
mask). The blended score feeds a global dictionary from which the best-scoring
fraction of unlabeled samples is selected.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import Hashable, Iterable

import numpy as np

from .raster import LAPLACIAN, SOBEL_H, SOBEL_V, as_float_grid, as_mask, binarize, convolve3x3

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_EPSILON",
    "GeometricScores",
    "RampSchedule",
    "ScoreDictionary",
    "boundary_consistency_score",
    "euclidean_distance_transform",
    "contour_regularity_score",
    "combined_score",
    "ramp_ratio",
    "topk_select",
]

DEFAULT_EPSILON = 1e-8

# Upper bound on elements of the (rows, W, W) block built by the second EDT pass.
_EDT_BLOCK = 1 << 22


@dataclass(frozen=True)
class GeometricScores:
    s_boundary: float
    s_contour: float
    s_score: float


@dataclass(frozen=True)
class RampSchedule:
    """Ramp from ``initial_value`` to ``final_value`` over ``total_steps`` steps."""

    initial_value: float
    final_value: float
    total_steps: int

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")

    def value(self, t: float) -> float:
        return ramp_ratio(self, t)


def ramp_ratio(schedule: RampSchedule, t: float) -> float:
    """Evaluate ``initial + (final - initial) * exp(-5 (1 - t/T)^2)``, clamped at ``t >= T``."""
    if t < 0:
        raise ValueError(f"step must be nonnegative, got {t}")
    T = schedule.total_steps
    if t >= T:
        return float(schedule.final_value)
    phase = 1.0 - t / T
    return float(
        schedule.initial_value
        + (schedule.final_value - schedule.initial_value) * math.exp(-5.0 * phase * phase)
    )


def boundary_consistency_score(p, epsilon: float = DEFAULT_EPSILON) -> float:
    """Mean of ``sqrt(G_h^2 + G_v^2 + epsilon)`` over the map; lower is smoother."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    g = as_float_grid(p)
    gh = convolve3x3(g, SOBEL_H)
    gv = convolve3x3(g, SOBEL_V)
    return float(np.mean(np.sqrt(gh * gh + gv * gv + epsilon)))


def _column_distances(m: np.ndarray) -> np.ndarray:
    # Distance along each column to the nearest background pixel (inf if none).
    h, w = m.shape
    fg = m.astype(bool)
    g = np.empty((h, w), dtype=np.float64)
    run = np.full(w, np.inf)
    for i in range(h):
        run = np.where(fg[i], run + 1.0, 0.0)
        g[i] = run
    run = np.full(w, np.inf)
    for i in range(h - 1, -1, -1):
        run = np.where(fg[i], run + 1.0, 0.0)
        np.minimum(g[i], run, out=g[i])
    return g


def squared_distance_transform(m) -> np.ndarray:
    """Exact squared distance from each pixel to the nearest background pixel.

    Two separable passes: per-column nearest-background offsets, then an exact
    minimisation of ``(j - k)^2 + g(i, k)^2`` across each row. Pixels with no
    background anywhere in the image come back as ``inf``.
    """
    mask = as_mask(m)
    h, w = mask.shape
    g2 = _column_distances(mask) ** 2
    cols = np.arange(w, dtype=np.float64)
    dj2 = (cols[:, None] - cols[None, :]) ** 2  # dj2[j, k]
    out = np.empty((h, w), dtype=np.float64)
    step = max(1, _EDT_BLOCK // (w * w))
    for r0 in range(0, h, step):
        r1 = min(h, r0 + step)
        out[r0:r1] = np.min(dj2[None, :, :] + g2[r0:r1, None, :], axis=2)
    return out


def euclidean_distance_transform(m) -> np.ndarray:
    """Exact Euclidean distance of every foreground pixel to the nearest background pixel.

    Background pixels map to 0. An all-foreground mask has no background to
    measure against; every pixel then gets the sentinel ``sqrt(H^2 + W^2)``.
    """
    mask = as_mask(m)
    h, w = mask.shape
    if mask.all():
        return np.full((h, w), math.hypot(h, w))
    return np.sqrt(squared_distance_transform(mask))


def contour_regularity_score(m) -> float:
    """Mean absolute Laplacian response of the mask's distance transform."""
    edt = euclidean_distance_transform(m)
    return float(np.mean(np.abs(convolve3x3(edt, LAPLACIAN))))


def combined_score(
    p,
    alpha: float = 0.5,
    tau: float = 0.5,
    epsilon: float = DEFAULT_EPSILON,
) -> GeometricScores:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    grid = as_float_grid(p, probability=True)
    s_b = boundary_consistency_score(grid, epsilon)
    s_c = contour_regularity_score(binarize(grid, tau))
    return GeometricScores(s_b, s_c, 1.0 - (alpha * s_b + (1.0 - alpha) * s_c))


class ScoreDictionary:
    """Latest geometric score per unlabeled sample, shared across iterations.

    Writes are lock-protected so several scoring workers can update it. With
    ``max_age`` set, entries not refreshed within that many iterations are
    ignored by :meth:`snapshot`; by default stale entries are retained.
    """

    def __init__(self, max_age: int | None = None):
        self._entries: dict[Hashable, tuple[float, int]] = {}
        self._lock = threading.Lock()
        self.max_age = max_age

    def update(self, sample_id: Hashable, score: float, iteration: int = 0) -> None:
        with self._lock:
            self._entries[sample_id] = (float(score), int(iteration))

    def update_many(self, items: Iterable[tuple[Hashable, float]], iteration: int = 0) -> None:
        with self._lock:
            for sample_id, score in items:
                self._entries[sample_id] = (float(score), int(iteration))

    def snapshot(self, current_iteration: int | None = None) -> dict[Hashable, float]:
        with self._lock:
            items = dict(self._entries)
        if self.max_age is not None and current_iteration is not None:
            cutoff = current_iteration - self.max_age
            return {k: s for k, (s, it) in items.items() if it >= cutoff}
        return {k: s for k, (s, _) in items.items()}

    def get(self, sample_id: Hashable) -> tuple[float, int]:
        with self._lock:
            return self._entries[sample_id]

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, sample_id) -> bool:
        with self._lock:
            return sample_id in self._entries


def topk_select(
    scores: ScoreDictionary | dict,
    ratio: float,
    n_unlabeled: int,
    current_iteration: int | None = None,
) -> list:
    """Ids of the ``floor(ratio * n_unlabeled)`` best-scoring samples.

    Ordered by descending score, ties broken by ascending id.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {ratio}")
    snap = scores.snapshot(current_iteration) if isinstance(scores, ScoreDictionary) else dict(scores)
    if not snap:
        raise ValueError("score dictionary is empty")
    k = int(math.floor(ratio * n_unlabeled))
    if k > len(snap):
        log.warning("requested top-%d from %d scored samples; returning all", k, len(snap))
        k = len(snap)
    ranked = sorted(snap.items(), key=lambda kv: (-kv[1], kv[0]))
    return [sid for sid, _ in ranked[:k]]
