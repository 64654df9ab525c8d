"""MGF1 writer: the file format is this package's contract with the
gesture-labelling toolkit, so the writer is self-contained here.

Layout: magic "MGF1", then version, record count, and feature dimension
as little-endian unsigned 32-bit integers, then count x dim
little-endian 32-bit floats.  The sidecar (same path plus ".json") maps
each record row to its (video_id, start_frame) clip and carries
free-form metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlignmentError, FormatError

MAGIC = b"MGF1"
VERSION = 1


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def write_feature_file(
    path: str | Path,
    features: np.ndarray,
    index: Sequence[tuple[str, int]],
    meta: dict | None = None,
) -> None:
    """Write features plus sidecar; output bytes depend only on the inputs."""
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise FormatError(f"features must be 2-D, got shape {features.shape}")
    count, dim = features.shape
    if len(index) != count:
        raise AlignmentError(f"{count} feature rows but {len(index)} index entries")
    path = Path(path)
    header = MAGIC + struct.pack("<III", VERSION, count, dim)
    path.write_bytes(header + features.tobytes())

    records = [
        {"row": row, "video_id": video_id, "start_frame": int(start_frame)}
        for row, (video_id, start_frame) in enumerate(index)
    ]
    doc = {"records": records, "meta": meta or {}}
    sidecar_path(path).write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
