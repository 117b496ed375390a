"""Curriculum-then-anti-curriculum training for desk-scale segmentation.

The package trains a small convolutional segmenter in three stages: a
warm-up on all data, a curriculum window that admits samples by
checkpoint-scored difficulty and reweights them by the temporal statistics
of those scores, and a closing anti-curriculum stage that low-pass-filters
the inputs to suppress high-frequency texture shortcuts. Everything runs on
numpy with exact analytic gradients and is bit-reproducible from one seed.
"""

from .curriculum import (
    DifficultyTable,
    ScheduleVariant,
    active_subset,
    difficulty_score,
    evaluate_difficulties,
    selection_fraction,
)
from .grid import BitMask, Grid2D, SeededRng, iou, minmax_normalize, percentile_threshold
from .losses import anti_loss, curriculum_loss, sigmoid, weighted_bce, weighted_iou
from .metrics import MetricReport, dice, f_beta, iou_score, mae, report_from_arrays
from .model import (
    PARAM_COUNT,
    AdamState,
    ConvNetParams,
    adam_init,
    adam_step,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .spectral import (
    SpectrumGrid,
    circular_lowpass_mask,
    dft2,
    filter_values,
    idft2,
    sbft,
    square_lowpass_mask,
)
from .synthdata import (
    DegradationSpec,
    Sample,
    SceneSpec,
    corrupt_labels,
    degrade,
    degrade_dataset,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .trainer import (
    ConfigError,
    EpochLog,
    ExperimentResult,
    TrainConfig,
    run_experiment,
    run_phase1,
    run_phase2,
    run_warmup,
)
from .weighting import (
    DifficultyBuffer,
    PixelWeightConfig,
    SampleWeightStats,
    beta_coefficient,
    pixel_entropy,
    pixel_weight_matrix,
    sample_weights,
    temporal_stats,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # grid
    "Grid2D", "BitMask", "SeededRng", "iou", "minmax_normalize",
    "percentile_threshold",
    # spectral
    "SpectrumGrid", "dft2", "idft2", "circular_lowpass_mask",
    "square_lowpass_mask", "filter_values", "sbft",
    # model
    "ConvNetParams", "AdamState", "PARAM_COUNT", "init_params", "forward",
    "backward", "adam_init", "adam_step", "save_checkpoint", "load_checkpoint",
    # losses
    "sigmoid", "weighted_bce", "weighted_iou", "curriculum_loss", "anti_loss",
    # curriculum
    "DifficultyTable", "ScheduleVariant", "difficulty_score",
    "selection_fraction", "active_subset", "evaluate_difficulties",
    # weighting
    "DifficultyBuffer", "SampleWeightStats", "PixelWeightConfig",
    "temporal_stats", "sample_weights", "pixel_entropy", "beta_coefficient",
    "pixel_weight_matrix",
    # synthdata
    "SceneSpec", "Sample", "DegradationSpec", "generate_dataset",
    "corrupt_labels", "degrade", "degrade_dataset", "save_dataset",
    "load_dataset",
    # metrics
    "MetricReport", "mae", "f_beta", "dice", "iou_score", "report_from_arrays",
    # trainer
    "ConfigError", "TrainConfig", "EpochLog", "ExperimentResult",
    "run_warmup", "run_phase1", "run_phase2", "run_experiment",
]
