"""Variance-guided channel editing for convolutional feature maps.

Per-channel kurtosis summarizes each channel's unit distribution; channels
with unstable statistics within a class or indistinct statistics across
classes are dropped per class, and linear detection heads are trained on the
original, edited, or merged feature sets.
"""

from ._kernels import backend as kernel_backend
from .edit import (
    EditConfig,
    EditMask,
    VarianceProfile,
    apply_mask,
    build_all_masks,
    build_mask,
    drop_distribution,
    edit_dataset,
    merge_datasets,
    random_edit,
    variance_profile,
)
from .evaluate import EvalConfig, EvalReport, PrCurve, average_precision, evaluate, iou, nms
from .linear import (
    BoxRegressor,
    LinearModel,
    SvmConfig,
    apply_transform,
    box_targets,
    score,
    svm_objective,
    train_regressor,
    train_svm,
    train_svm_binary,
)
from .pipeline import RunConfig, export_drops, run_pipeline
from .stats import (
    ChannelStatsMatrix,
    PcaResult,
    ProbabilityVector,
    channel_kurtosis,
    mask_expectation,
    pca_project,
    rank_channel_activations,
    shannon_entropy,
    stats_matrix,
)
from .store import (
    Dataset,
    DetectionRecord,
    FeatureMap,
    GroundTruthBox,
    LabeledSample,
    read_dataset,
    read_detections,
    read_ground_truth,
    write_dataset,
    write_detections,
    write_ground_truth,
)
from .synth import RecoveryStats, SynthSpec, generate, planted_recovery, synthetic_ground_truth

__version__ = "0.1.0"
