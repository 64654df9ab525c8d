"""Frame-level multi-label gesture labelling toolkit for music-performance
recordings: dataset preparation, timbral audio features, batch-balanced
training, and evaluation."""

from __future__ import annotations

__version__ = "0.1.0"

from .classes import (
    ANNOTATED_CLASSES,
    DEFAULT_SUPER_CLASS_MAP,
    FINE_CLASSES,
    NORMAL_PLAY,
    SUPER_CLASSES,
    SuperClassMap,
)
from .dataset import (
    CLIP_FRAMES,
    Clip,
    ClipSet,
    FrameLabelMatrix,
    GestureAnnotation,
    assemble_clips,
    derive_normal_play,
    intercorrelation,
    leave_one_out_split,
    map_super_classes,
    parse_annotations,
    rasterize_labels,
    split_dataset,
    temporal_smooth,
)
from .errors import (
    AlignmentError,
    ConfigError,
    FormatError,
    GestureLabError,
    ParseError,
    ShapeError,
    ValidationError,
    VocabularyError,
)

from .audio import extract_clip_features, extract_features, read_wav, slice_audio
from .dbb import batch_loss, class_weights, positive_mask
from .metrics import MetricsReport, binarize, compute_report
from .mgf1 import FeatureTable, align_features, read_feature_file, write_feature_file
from .nn import DenseNet, build_architecture, forward, load_checkpoint, save_checkpoint
from .trainer import (
    ExperimentConfig,
    ExperimentData,
    Subset,
    evaluate,
    run_protocol,
    train,
)
