"""csdkit: concurrent speaker detection at desk scale.

Featurize multichannel 16 kHz audio into log-spectrum segments, classify
each segment as noise-only / single-speaker / concurrent-speakers with a
multichannel transformer, train with class-weighted, label-smoothed, and
cost-sensitive objectives, calibrate confidences with temperature scaling,
and evaluate with precision/recall, mAP, and confusion matrices.
"""

from .calibration import (
    CalibrationResult,
    apply_policy,
    apply_policy_batch,
    fit_temperature,
    softmax_probs,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig, load_config, load_profile
from .errors import (
    ConfigError,
    ContractError,
    CsdkitError,
    InputError,
    NumericError,
    ShapeError,
)
from .features import (
    AudioClip,
    SegmentTensor,
    Spectrogram,
    segmentize,
    stft_log_spectrum,
)
from .labels import (
    ClassStats,
    LabelTrack,
    TranscriptSegment,
    build_label_track,
    class_stats,
    concurrency_count,
    label_for_segment,
    load_transcript,
)
from .losses import (
    LossConfig,
    ce_ls_weighted,
    cost_matrix_from_confusion,
    cs_loss,
    total_objective,
)
from .manifest import ManifestEntry, load_manifest
from .metrics import (
    MetricsReport,
    average_precision,
    build_report,
    confusion_matrix,
    precision_recall,
    reduce_to_task,
)
from .model import (
    CsdModel,
    MergeType,
    ModelConfig,
    build_model,
    count_parameters,
    patch_count,
)
from .synth import SceneSpec, plan_timeline, synth_scene
from .tensor import AdamState, GradTape, Tensor, adam_step, backward
from .training import TrainConfig, predict_logits, train
from .wavio import read_wav, write_wav

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AudioClip",
    "CalibrationResult",
    "ClassStats",
    "ConfigError",
    "ContractError",
    "CsdkitError",
    "CsdModel",
    "GradTape",
    "InputError",
    "LabelTrack",
    "LossConfig",
    "ManifestEntry",
    "MergeType",
    "MetricsReport",
    "ModelConfig",
    "NumericError",
    "PipelineConfig",
    "SceneSpec",
    "SegmentTensor",
    "ShapeError",
    "Spectrogram",
    "TrainConfig",
    "TranscriptSegment",
    "Tensor",
    "adam_step",
    "apply_policy",
    "apply_policy_batch",
    "average_precision",
    "backward",
    "build_label_track",
    "build_model",
    "build_report",
    "ce_ls_weighted",
    "class_stats",
    "concurrency_count",
    "confusion_matrix",
    "cost_matrix_from_confusion",
    "count_parameters",
    "cs_loss",
    "fit_temperature",
    "label_for_segment",
    "load_checkpoint",
    "load_config",
    "load_manifest",
    "load_profile",
    "load_transcript",
    "patch_count",
    "plan_timeline",
    "precision_recall",
    "predict_logits",
    "read_wav",
    "reduce_to_task",
    "save_checkpoint",
    "segmentize",
    "softmax_probs",
    "stft_log_spectrum",
    "synth_scene",
    "total_objective",
    "train",
    "write_wav",
]
