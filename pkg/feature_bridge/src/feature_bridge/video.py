"""Clip-window decoding: a video becomes (clips, 3, 16, 112, 112) float32.

Frames are squash-resized (no aspect preservation, bilinear) to
112 x 112 RGB and normalized per channel on the 0-255 scale; the
constants travel with the output sidecar because downstream consumers
cannot recover them from the records.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import AlignmentError, FormatError, ValidationError

FRAME_RATE = 25.0
CLIP_FRAMES = 16
SIDE = 112
CHANNEL_MEAN = (110.63666788, 103.16065604, 96.29023126)  # RGB, 0-255 scale
CHANNEL_STD = (38.7568578, 37.88248729, 40.02898126)


@dataclass
class VideoInfo:
    path: Path
    frame_count: int
    clip_count: int
    fps: float


def read_clip_windows(
    path: str | Path,
    expected_frames: int | None = None,
    expected_fps: float | None = FRAME_RATE,
    fps_tolerance: float = 0.1,
) -> tuple[np.ndarray, VideoInfo]:
    """Decode, resize, and normalize every complete 16-frame window.

    Trailing frames that do not fill a window are dropped, mirroring the
    clip convention of the consuming toolkit.
    """
    path = Path(path)
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise FormatError(f"{path}: not a decodable video")
    try:
        fps = float(capture.get(cv2.CAP_PROP_FPS))
        if expected_fps is not None and abs(fps - expected_fps) > fps_tolerance:
            raise AlignmentError(
                f"{path}: container declares {fps:g} fps, clip windows assume "
                f"{expected_fps:g}"
            )
        frames: list[np.ndarray] = []
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
            frames.append(cv2.resize(rgb, (SIDE, SIDE), interpolation=cv2.INTER_LINEAR))
    finally:
        capture.release()

    n = len(frames)
    if expected_frames is not None and n != expected_frames:
        raise AlignmentError(f"{path}: decoded {n} frames, expected {expected_frames}")
    clip_count = n // CLIP_FRAMES
    if clip_count < 1:
        raise ValidationError(
            f"{path}: {n} frames is fewer than one {CLIP_FRAMES}-frame window"
        )

    stacked = np.stack(frames[: clip_count * CLIP_FRAMES]).astype(np.float32)
    mean = np.asarray(CHANNEL_MEAN, dtype=np.float32)
    std = np.asarray(CHANNEL_STD, dtype=np.float32)
    normalized = (stacked - mean) / std  # (frames, SIDE, SIDE, 3)
    windows = normalized.reshape(clip_count, CLIP_FRAMES, SIDE, SIDE, 3)
    windows = np.ascontiguousarray(windows.transpose(0, 4, 1, 2, 3))
    return windows, VideoInfo(path, n, clip_count, fps)
