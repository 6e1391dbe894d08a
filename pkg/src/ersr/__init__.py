"""Ellipse-constrained pseudo-label refinement and symmetric consistency toolkit.

Modules
-------
raster    grids, 3x3 correlation, thresholding, ERSRF32/PNG I/O
dsaf      boundary/contour scoring, exact distance transform, ramped top-K selection
ellipse   largest component, direct least-squares ellipse fit, refinement
symmetry  reflection, half-plane split, mirrored augmentation and predictions
losses    MSE consistency terms, Dice+BCE, ramped total, EMA update
metrics   Dice, HD95, ASD
synth     phantoms, mock teacher, end-to-end experiments
cli       the ``ersr`` command
"""

__version__ = "0.1.0"

from .config import ConfigError, PipelineConfig, parse_config
from .dsaf import (
    GeometricScores,
    RampSchedule,
    ScoreDictionary,
    boundary_consistency_score,
    combined_score,
    contour_regularity_score,
    euclidean_distance_transform,
    ramp_ratio,
    topk_select,
)
from .ellipse import (
    EllipseParams,
    EmptyMask,
    FitDegenerate,
    elliptical_distance,
    fit_ellipse,
    largest_component,
    refine_map,
    refine_pseudo_label,
    rotate_coords,
)
from .losses import (
    LossReport,
    aug_consistency,
    ema_update,
    mse,
    ori_consistency,
    supervised_loss,
    sym_consistency,
    total_loss,
)
from .metrics import MetricUndefined, asd, dice_score, hd95
from .raster import binarize, convolve3x3, read_image, write_image
from .symmetry import (
    SymmetryAxis,
    axis_from_ellipse,
    compose_symmetric_images,
    decompose_prediction,
    mirror_prediction,
    reflect_point,
    split_halves,
)
from .synth import (
    PhantomSpec,
    TeacherCorruption,
    generate_phantom,
    mock_teacher,
    run_axis_ablation,
    run_pipeline_experiment,
)
