"""Infant pain assessment from facial action units.

The toolkit derives per-AU engagement levels from class-activation maps
via landmark-anchored regions, ranks AUs to select a core set, scores
pain with an engagement-weighted regression network, and benchmarks the
result against the PSPI baseline under subject-disjoint cross-validation.
"""

from .core import (
    AU_IDS,
    AU_NAMES,
    BILATERAL_AUS,
    MIDLINE_AUS,
    ActivationMap,
    AUIntensityVector,
    AupainError,
    DataError,
    FaceLandmarks,
    LabelScheme,
    PainLevel,
    TrainingError,
)
from .engagement import (
    EngagementProfile,
    aggregate_engagement,
    frame_engagement,
    read_profile,
    region_mean,
    top_k,
    write_profile,
)
from .evaluation import (
    AblationResult,
    ConfusionMatrix,
    CrossValidationResult,
    MetricReport,
    PipelineConfig,
    ablate_top_k,
    confusion,
    cross_validate,
    metrics,
)
from .geometry import (
    AUCenter,
    RegionRect,
    au_center,
    au_region,
    eye_centers,
    interocular_scale,
    scale_to_map,
)
from .ingestion import (
    DatasetManifest,
    FoldSpec,
    FrameEntry,
    bin_label,
    load_activation_map,
    load_au_intensities,
    load_landmarks,
    load_manifest,
    subject_folds,
    write_cam1,
    write_manifest,
)
from .pspi import EyeMode, PSPIScore, ThresholdSet, calibrate_thresholds, pspi, pspi_classify
from .regressor import (
    RegressorModel,
    TrainConfig,
    TrainHistory,
    adam_step,
    backward,
    forward,
    init_model,
    predict,
    read_model,
    smooth_l1,
    train,
    write_model,
)

__version__ = "0.1.0"
