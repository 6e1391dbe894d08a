"""Synthetic ultrasound-like phantoms, a mock teacher, and end-to-end experiments.

The mock teacher corrupts a ground-truth mask in controlled ways (boundary
jitter, spurious blobs, blur, noise) so that pseudo-label filtering and
refinement can be checked against known truth without training a network.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .config import PipelineConfig
from .dsaf import (
    RampSchedule,
    ScoreDictionary,
    combined_score,
    euclidean_distance_transform,
    ramp_ratio,
    topk_select,
)
from .ellipse import EllipseParams, distance_map, rasterize_ellipse, refine_map
from .losses import (
    aug_consistency,
    ori_consistency,
    supervised_loss,
    sym_consistency,
    total_loss,
)
from .metrics import dice_score
from .raster import as_mask, binarize, pixel_coords
from .symmetry import (
    AXIS_STRATEGIES,
    axis_from_ellipse,
    compose_symmetric_images,
    decompose_prediction,
    mirror_prediction,
    split_halves,
)

__all__ = [
    "PhantomSpec",
    "Phantom",
    "TeacherCorruption",
    "generate_phantom",
    "mock_teacher",
    "ExperimentReport",
    "run_pipeline_experiment",
    "run_axis_ablation",
    "REPORT_COLUMNS",
    "ABLATION_COLUMNS",
    "worker_count",
    "parallel_map",
    "ablation_csv",
]


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of a synthetic head phantom.

    Semi-axis ranges and centre jitter are fractions of ``size``.
    """

    size: int = 128
    center_jitter: float = 0.05
    semi_major_range: tuple[float, float] = (0.22, 0.36)
    eccentricity_range: tuple[float, float] = (1.15, 1.6)
    theta_range: tuple[float, float] = (0.0, 180.0)
    background: float = 0.08
    interior: float = 0.3
    ring_brightness: float = 0.85
    ring_width: float = 3.0
    speckle: float = 0.3
    dropout_fraction: float = 0.15
    shadow_strength: float = 0.3
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.semi_major_range
        if self.size < 8:
            raise ValueError("size must be at least 8")
        if not 0 < lo <= hi:
            raise ValueError("semi_major_range must be positive and ordered")
        if not 1.0 <= self.eccentricity_range[0] <= self.eccentricity_range[1]:
            raise ValueError("eccentricity_range must satisfy 1 <= low <= high")
        for name in ("center_jitter", "speckle", "dropout_fraction", "shadow_strength", "ring_width"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.dropout_fraction >= 1.0:
            raise ValueError("dropout_fraction must be < 1")
        reach = (hi + self.center_jitter) * self.size + self.ring_width / 2.0 + 2.0
        if reach > self.size / 2.0:
            raise ValueError(
                f"infeasible phantom: ellipse reach {reach:.1f}px exceeds half-grid {self.size / 2.0:.1f}px"
            )


@dataclass(frozen=True)
class Phantom:
    image: np.ndarray
    gt: np.ndarray
    ellipse: EllipseParams


def _annulus(e: EllipseParams, width: float, h: int, w: int) -> np.ndarray:
    outer = replace(e, axis_major=e.axis_major + width, axis_minor=e.axis_minor + width)
    inner_minor = e.axis_minor - width
    inside_outer = distance_map(outer, h, w) <= 1.0
    if inner_minor <= 0:
        return inside_outer
    inner = replace(e, axis_major=e.axis_major - width, axis_minor=inner_minor)
    return inside_outer & (distance_map(inner, h, w) > 1.0)


def generate_phantom(spec: PhantomSpec, seed: int | None = None) -> Phantom:
    """Render one phantom: dark background, textured interior, bright elliptical ring.

    The ring loses ``dropout_fraction`` of its arc in two gaps, the image is
    darkened by ``shadow_strength`` inside an acoustic-shadow wedge, and
    multiplicative gamma speckle with standard deviation ``speckle`` is applied.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n = spec.size
    semi_a = rng.uniform(*spec.semi_major_range) * n
    semi_b = semi_a / rng.uniform(*spec.eccentricity_range)
    theta = rng.uniform(*spec.theta_range)
    jitter = spec.center_jitter * n
    c_a = (n - 1) / 2.0 + rng.uniform(-jitter, jitter)
    c_b = (n - 1) / 2.0 + rng.uniform(-jitter, jitter)
    e = EllipseParams(c_a, c_b, 2.0 * semi_a, 2.0 * semi_b, theta)

    gt = rasterize_ellipse(e, n, n)
    image = np.where(gt.astype(bool), spec.interior, spec.background)
    ring = _annulus(e, spec.ring_width, n, n)

    a, b = pixel_coords(n, n)
    t = math.radians(theta)
    da, db = a - c_a, b - c_b
    a_rot = da * math.cos(t) + db * math.sin(t)
    b_rot = -da * math.sin(t) + db * math.cos(t)
    phase = np.mod(np.arctan2(b_rot / semi_b, a_rot / semi_a), 2 * np.pi)
    if spec.dropout_fraction > 0:
        gap = np.pi * spec.dropout_fraction  # two gaps share the dropped arc
        for start in rng.uniform(0.0, 2 * np.pi, size=2):
            ring &= np.mod(phase - start, 2 * np.pi) >= gap
    image = np.where(ring, spec.ring_brightness, image)

    if spec.shadow_strength > 0:
        direction = rng.uniform(0.0, 2 * np.pi)
        half_width = np.radians(20.0)
        ang = np.arctan2(db, da)
        off = np.abs(np.mod(ang - direction + np.pi, 2 * np.pi) - np.pi)
        shadow = (off < half_width) & (distance_map(e, n, n) > 0.25)
        image = np.where(shadow, image * (1.0 - spec.shadow_strength), image)

    if spec.speckle > 0:
        k = 1.0 / spec.speckle**2
        image = image * rng.gamma(k, 1.0 / k, size=image.shape)
    return Phantom(np.clip(image, 0.0, 1.0), gt, e)


@dataclass(frozen=True)
class TeacherCorruption:
    """Degradations applied by :func:`mock_teacher`; all zero means a perfect teacher."""

    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    jitter_amplitude: float = 0.0
    jitter_scale: float = 6.0
    blob_count: int = 0
    blob_radius: float = 4.0
    seed: int = 0

    def __post_init__(self):
        for name in ("blur_sigma", "noise_sigma", "jitter_amplitude", "blob_radius", "blob_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.jitter_scale <= 0:
            raise ValueError("jitter_scale must be positive")

    @classmethod
    def at_level(cls, level: float, seed: int = 0) -> "TeacherCorruption":
        """A one-knob corruption family; ``level = 0`` is exact, ~1 is moderate."""
        if level < 0:
            raise ValueError("corruption level must be nonnegative")
        if level == 0:
            return cls(seed=seed)
        return cls(
            blur_sigma=1.0 + level,
            noise_sigma=0.12 * level,
            jitter_amplitude=3.0 * level,
            jitter_scale=6.0,
            blob_count=int(round(3 * level)),
            blob_radius=3.0 + 2.0 * level,
            seed=seed,
        )


def mock_teacher(gt, c: TeacherCorruption, seed: int | None = None) -> np.ndarray:
    """Corrupt a ground-truth mask into a teacher-like probability map."""
    m = as_mask(gt)
    h, w = m.shape
    rng = np.random.default_rng(c.seed if seed is None else seed)
    if c.jitter_amplitude > 0 and 0 < m.sum() < m.size:
        sdf = euclidean_distance_transform(m) - euclidean_distance_transform(1 - m)
        field_ = ndimage.gaussian_filter(rng.standard_normal((h, w)), c.jitter_scale, mode="wrap")
        field_ *= c.jitter_amplitude / max(np.abs(field_).max(), 1e-12)
        m = (sdf + field_ > 0).astype(np.uint8)
    p = m.astype(np.float64)
    if c.blob_count > 0:
        a, b = pixel_coords(h, w)
        for _ in range(c.blob_count):
            ca, cb = rng.uniform(0, w), rng.uniform(0, h)
            r = c.blob_radius * rng.uniform(0.5, 1.5)
            value = rng.uniform(0.6, 1.0)
            disk = (a - ca) ** 2 + (b - cb) ** 2 <= r * r
            p = np.where(disk, np.maximum(p, value), p)
    if c.blur_sigma > 0:
        p = ndimage.gaussian_filter(p, c.blur_sigma, mode="nearest")
    if c.noise_sigma > 0:
        p = p + rng.normal(0.0, c.noise_sigma, size=p.shape)
    return np.clip(p, 0.0, 1.0)


REPORT_COLUMNS = [
    "sample_id",
    "group",
    "s_boundary",
    "s_contour",
    "s_score",
    "selected",
    "refine_status",
    "c_a",
    "c_b",
    "axis_major",
    "axis_minor",
    "theta_deg",
    "dice_raw",
    "dice_refined",
    "l_sup",
    "l_ori",
    "l_aug",
    "l_sym",
    "lambda",
    "l_total",
    "status",
]

ABLATION_COLUMNS = ["strategy", "n", "mirror_dice", "l_ori", "l_aug", "l_sym", "l_total"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10g}"
    return str(v)


def _write_csv(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


@dataclass
class ExperimentReport:
    rows: list[dict]
    summary: dict[str, float] = field(default_factory=dict)

    def to_csv(self) -> str:
        return _write_csv(REPORT_COLUMNS, self.rows)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for k, v in self.summary.items():
            writer.writerow([k, _fmt(v)])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(self.summary_csv())


def worker_count() -> int:
    """Workers allowed by ``ERSR_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("ERSR_THREADS", "0").strip() or "0"
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


def parallel_map(fn, items, threads: int | None):
    threads = worker_count() if threads is None else threads
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class _Sample:
    index: int
    group: int
    phantom: Phantom
    teacher: np.ndarray
    seeds: np.ndarray


def _sample_seeds(master: int, index: int) -> np.ndarray:
    # phantom, teacher, student, augmentation, axis, student-s1, student-s2
    return np.random.default_rng(np.random.SeedSequence([master, index])).integers(0, 2**31 - 1, size=7)


def _prepare(index, spec, corruptions, master_seed) -> _Sample:
    group = index % len(corruptions)
    seeds = _sample_seeds(master_seed, index)
    ph = generate_phantom(spec, seed=int(seeds[0]))
    teacher = mock_teacher(ph.gt, corruptions[group], seed=int(seeds[1]))
    return _Sample(index, group, ph, teacher, seeds)


def _consistency(sample: _Sample, refinement, cfg: PipelineConfig, axis_kind: str, student, step) -> dict:
    """Symmetric augmentation and the full loss stack for one refined sample."""
    ph, seeds = sample.phantom, sample.seeds
    n = ph.gt.shape[0]
    p_re = refinement.p_re
    m_re = binarize(p_re, cfg.tau)
    axis = axis_from_ellipse(
        refinement.ellipse, axis_kind, rng=np.random.default_rng(int(seeds[4])), mask=m_re
    )
    halves = split_halves(axis, n, n, cfg.split_mode)
    # Augmented images feed the student in training; here the student is mocked
    # from the correspondingly augmented label.
    compose_symmetric_images(ph.image, m_re, axis, halves, seed=int(seeds[3]))
    labels = compose_symmetric_images(ph.gt.astype(np.float64), m_re, axis, halves, perturb=False)
    p_o = mock_teacher(ph.gt, student, seed=int(seeds[2]))
    p_s1 = mock_teacher(labels.x_s1 > 0.5, student, seed=int(seeds[5]))
    p_s2 = mock_teacher(labels.x_s2 > 0.5, student, seed=int(seeds[6]))
    p_o1, p_o2 = mirror_prediction(p_o, axis, halves)
    parts = halves.restrict(m_re) if cfg.decompose_region == "foreground" else halves
    s1_1, s1_2 = decompose_prediction(p_s1, axis, parts)
    s2_1, s2_2 = decompose_prediction(p_s2, axis, parts)
    report = total_loss(
        supervised_loss(p_o, ph.gt, cfg.dice_weight, cfg.bce_weight),
        ori_consistency(p_o, p_re),
        aug_consistency(p_o1, p_s1, p_o2, p_s2),
        sym_consistency(s1_1, s1_2, s2_1, s2_2),
        RampSchedule(0.0, cfg.lambda_max, cfg.total_steps),
        step,
    )
    mirrored_gt = mirror_prediction(ph.gt.astype(np.float64), axis, halves)[0]
    return {
        "l_sup": report.l_sup,
        "l_ori": report.l_ori,
        "l_aug": report.l_aug,
        "l_sym": report.l_sym,
        "lambda": report.lambda_t,
        "l_total": report.l_total,
        "mirror_dice": dice_score(mirrored_gt > 0.5, ph.gt),
    }


def _as_list(corruption) -> list[TeacherCorruption]:
    if isinstance(corruption, TeacherCorruption):
        return [corruption]
    out = list(corruption)
    if not out:
        raise ValueError("at least one corruption setting is required")
    return out


def run_pipeline_experiment(
    n_samples: int,
    spec: PhantomSpec,
    corruption: TeacherCorruption | Sequence[TeacherCorruption],
    config: PipelineConfig = PipelineConfig(),
    *,
    step: int = 0,
    student: TeacherCorruption | None = None,
    threads: int | None = None,
) -> ExperimentReport:
    """Generate, score, select, refine, augment and evaluate ``n_samples`` phantoms.

    With several corruption settings, sample ``i`` uses setting ``i % k`` and
    records ``k``'s index as its group. Refinement and losses are computed for
    every sample; ``selected`` flags the top-K choice at ``step``. A failing
    sample is recorded with its error in ``status`` and the batch continues.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    corruptions = _as_list(corruption)
    cfg = config
    samples = parallel_map(lambda i: _prepare(i, spec, corruptions, cfg.seed), range(n_samples), threads)

    def score(s: _Sample):
        try:
            return combined_score(s.teacher, cfg.alpha, cfg.tau, cfg.epsilon)
        except ValueError as exc:
            return exc

    scores = parallel_map(score, samples, threads)
    ids = [f"s{s.index:05d}" for s in samples]
    book = ScoreDictionary()
    book.update_many(
        ((sid, sc.s_score) for sid, sc in zip(ids, scores) if not isinstance(sc, Exception)),
        iteration=step,
    )
    ratio = ramp_ratio(RampSchedule(cfg.initial_ratio, cfg.final_ratio, cfg.total_steps), step)
    selected = set(topk_select(book, ratio, n_samples)) if len(book) else set()

    def finish(args):
        s, sid, sc = args
        row: dict = {"sample_id": sid, "group": s.group, "selected": sid in selected, "status": "ok"}
        if isinstance(sc, Exception):
            row["status"] = f"error: {sc}"
            return row
        row.update(s_boundary=sc.s_boundary, s_contour=sc.s_contour, s_score=sc.s_score)
        try:
            ref = refine_map(s.teacher, cfg.beta, cfg.tau)
            row["refine_status"] = "skipped" if ref.skipped else "ok"
            row["dice_raw"] = dice_score(binarize(s.teacher, cfg.tau), s.phantom.gt)
            row["dice_refined"] = dice_score(binarize(ref.p_re, cfg.tau), s.phantom.gt)
            if ref.ellipse is not None:
                e = ref.ellipse
                row.update(c_a=e.c_a, c_b=e.c_b, axis_major=e.axis_major, axis_minor=e.axis_minor, theta_deg=e.theta)
                terms = _consistency(s, ref, cfg, cfg.axis_kind, student or corruptions[s.group], step)
                terms.pop("mirror_dice")
                row.update(terms)
        except Exception as exc:  # per-sample isolation: record and keep going
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        return row

    rows = parallel_map(finish, list(zip(samples, ids, scores)), threads)
    return ExperimentReport(rows, _summarise(rows, ratio, len(corruptions)))


def _mean(values) -> float:
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else float("nan")


def _summarise(rows: list[dict], ratio: float, n_groups: int) -> dict[str, float]:
    sel = [r for r in rows if r["selected"]]
    rej = [r for r in rows if not r["selected"] and "s_score" in r]
    summary = {
        "n_samples": len(rows),
        "ratio": ratio,
        "n_selected": len(sel),
        "n_refine_skipped": sum(r.get("refine_status") == "skipped" for r in rows),
        "n_errors": sum(r["status"] != "ok" for r in rows),
        "mean_dice_raw": _mean(r.get("dice_raw") for r in rows),
        "mean_dice_refined": _mean(r.get("dice_refined") for r in rows),
        "mean_dice_raw_selected": _mean(r.get("dice_raw") for r in sel),
        "mean_dice_refined_selected": _mean(r.get("dice_refined") for r in sel),
        "mean_score_selected": _mean(r.get("s_score") for r in sel),
        "mean_score_rejected": _mean(r.get("s_score") for r in rej),
    }
    summary["dice_gain"] = summary["mean_dice_refined"] - summary["mean_dice_raw"]
    for g in range(n_groups if n_groups > 1 else 0):
        summary[f"selected_fraction_group{g}"] = (
            sum(r["group"] == g for r in sel) / len(sel) if sel else float("nan")
        )
    for key in ("l_sup", "l_ori", "l_aug", "l_sym", "l_total"):
        summary[f"mean_{key}"] = _mean(r.get(key) for r in rows)
    return summary


def run_axis_ablation(
    n_samples: int,
    spec: PhantomSpec,
    corruption: TeacherCorruption,
    config: PipelineConfig = PipelineConfig(),
    strategies: Sequence[str] = AXIS_STRATEGIES,
    *,
    step: int | None = None,
    threads: int | None = None,
) -> list[dict]:
    """Compare symmetry-axis strategies on identical samples.

    For each strategy reports the mean Dice between the ground truth and its
    mirror across the chosen axis, and the mean consistency losses.
    """
    cfg = config
    step = cfg.total_steps if step is None else step
    corruptions = _as_list(corruption)
    samples = parallel_map(lambda i: _prepare(i, spec, corruptions, cfg.seed), range(n_samples), threads)
    refinements = parallel_map(lambda s: refine_map(s.teacher, cfg.beta, cfg.tau), samples, threads)
    rows = []
    for kind in strategies:
        usable = [(s, r) for s, r in zip(samples, refinements) if not r.skipped]
        terms = parallel_map(
            lambda sr: _consistency(sr[0], sr[1], cfg, kind, corruptions[sr[0].group], step), usable, threads
        )
        row = {"strategy": kind, "n": len(terms)}
        for key in ("mirror_dice", "l_ori", "l_aug", "l_sym", "l_total"):
            row[key] = _mean(t[key] for t in terms)
        rows.append(row)
    return rows


def ablation_csv(rows: list[dict]) -> str:
    return _write_csv(ABLATION_COLUMNS, rows)
