"""Video-to-MGF1 bridge: frozen 3D ResNet-34 clip features."""

from .errors import (
    AlignmentError,
    BridgeError,
    ConfigError,
    FormatError,
    ValidationError,
)
from .extract import ExtractionResult, extract_video_features
from .mgf1 import write_feature_file
from .resnet3d import FEATURE_DIM, ResNet3d, build_backbone, state_dict_sha256
from .video import CLIP_FRAMES, FRAME_RATE, VideoInfo, read_clip_windows

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BridgeError",
    "CLIP_FRAMES",
    "ConfigError",
    "ExtractionResult",
    "FEATURE_DIM",
    "FRAME_RATE",
    "FormatError",
    "ResNet3d",
    "ValidationError",
    "VideoInfo",
    "__version__",
    "build_backbone",
    "extract_video_features",
    "read_clip_windows",
    "state_dict_sha256",
    "write_feature_file",
]
