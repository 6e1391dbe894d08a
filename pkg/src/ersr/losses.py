"""Consistency losses, supervised Dice+BCE, ramped aggregation and EMA updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsaf import RampSchedule, ramp_ratio
from .raster import as_float_grid, as_mask

__all__ = [
    "BCE_CLIP",
    "DICE_SMOOTH",
    "LossReport",
    "mse",
    "aug_consistency",
    "sym_consistency",
    "ori_consistency",
    "soft_dice",
    "binary_cross_entropy",
    "supervised_loss",
    "total_loss",
    "ema_update",
]

BCE_CLIP = 1e-7
DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class LossReport:
    l_aug: float
    l_sym: float
    l_ori: float
    l_sup: float
    lambda_t: float
    l_total: float


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = as_float_grid(a)
    b = as_float_grid(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def aug_consistency(p_o1, p_s1, p_o2, p_s2) -> float:
    return mse(p_o1, p_s1) + mse(p_o2, p_s2)


def sym_consistency(ps1_1, ps1_2, ps2_1, ps2_2) -> float:
    return mse(ps1_1, ps1_2) + mse(ps2_1, ps2_2)


def ori_consistency(p_o, p_re) -> float:
    return mse(p_o, p_re)


def soft_dice(pred, gt, smooth: float = DICE_SMOOTH) -> float:
    p, g = _pair(pred, as_mask(gt))
    return float((2.0 * np.sum(p * g) + smooth) / (np.sum(p) + np.sum(g) + smooth))


def binary_cross_entropy(pred, gt, clip: float = BCE_CLIP) -> float:
    p, g = _pair(pred, as_mask(gt))
    p = np.clip(p, clip, 1.0 - clip)
    return float(-np.mean(g * np.log(p) + (1.0 - g) * np.log1p(-p)))


def supervised_loss(pred, gt, w_dice: float = 0.5, w_bce: float = 0.5) -> float:
    """``w_dice * (1 - soft Dice) + w_bce * BCE``."""
    if w_dice < 0 or w_bce < 0:
        raise ValueError("loss weights must be nonnegative")
    return w_dice * (1.0 - soft_dice(pred, gt)) + w_bce * binary_cross_entropy(pred, gt)


def total_loss(
    l_sup: float,
    l_ori: float,
    l_aug: float,
    l_sym: float,
    lambda_schedule: RampSchedule,
    t: float,
) -> LossReport:
    """Aggregate ``l_sup + lambda(t) * (l_ori + l_aug + l_sym)``."""
    lam = ramp_ratio(lambda_schedule, t)
    return LossReport(
        l_aug=l_aug,
        l_sym=l_sym,
        l_ori=l_ori,
        l_sup=l_sup,
        lambda_t=lam,
        l_total=l_sup + lam * (l_ori + l_aug + l_sym),
    )


def ema_update(teacher, student, momentum: float = 0.99) -> np.ndarray:
    """Blend parameters: ``momentum * teacher + (1 - momentum) * student``."""
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    t = np.asarray(teacher, dtype=np.float64)
    s = np.asarray(student, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError(f"parameter length mismatch: {t.shape} vs {s.shape}")
    return momentum * t + (1.0 - momentum) * s
