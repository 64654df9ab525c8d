"""End-to-end extraction: video file -> MGF1 clip-feature file."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .mgf1 import write_feature_file
from .resnet3d import build_backbone
from .video import (
    CHANNEL_MEAN,
    CHANNEL_STD,
    CLIP_FRAMES,
    FRAME_RATE,
    read_clip_windows,
)


@dataclass
class ExtractionResult:
    path: Path
    clip_count: int
    dim: int
    meta: dict


def extract_video_features(
    video_path: str | Path,
    out_path: str | Path,
    weights: str | Path | None = None,
    seed: int = 0,
    batch_size: int = 4,
    expected_frames: int | None = None,
    expected_fps: float | None = FRAME_RATE,
) -> ExtractionResult:
    """Extract one 400-wide record per non-overlapping 16-frame window.

    Frozen extraction: the backbone runs in eval mode with gradients off,
    so repeated runs on the same inputs are bit-identical.  The sidecar
    records the preprocessing constants and the weight provenance.
    """
    windows, info = read_clip_windows(video_path, expected_frames, expected_fps)
    model, provenance = build_backbone(weights, seed)

    chunks: list[np.ndarray] = []
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            batch = torch.from_numpy(windows[i : i + batch_size])
            chunks.append(model(batch).numpy())
    features = np.concatenate(chunks).astype(np.float32)

    video_id = Path(video_path).stem
    index = [(video_id, k * CLIP_FRAMES) for k in range(info.clip_count)]
    meta = {
        "role": "video",
        "source": Path(video_path).name,
        "backbone": "resnet34-3d",
        "frame_layout": "rgb-3x16x112x112",
        "resize": "squash-bilinear-112x112",
        "normalization_mean": list(CHANNEL_MEAN),
        "normalization_std": list(CHANNEL_STD),
        "fps": info.fps,
        "frame_count": info.frame_count,
        **provenance,
    }
    write_feature_file(out_path, features, index, meta)
    return ExtractionResult(Path(out_path), info.clip_count, features.shape[1], meta)
