"""MGF1 binary clip-feature files with a JSON sidecar index.

Layout: magic "MGF1", then version, clip count, and feature dimension as
little-endian unsigned 32-bit integers, then count x dim little-endian
32-bit floats.  The sidecar (same path plus ".json") maps each record
row to its (video_id, start_frame) clip and carries free-form metadata,
keeping the binary block dumb and the index human-readable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlignmentError, FormatError

MAGIC = b"MGF1"
VERSION = 1
VIDEO_FEATURE_DIM = 400
AUDIO_FEATURE_DIM = 3024


@dataclass
class FeatureTable:
    """An MGF1 file in memory: float32 rows keyed by clip."""

    features: np.ndarray  # (count, dim) float32
    index: list[tuple[str, int]]  # row -> (video_id, start_frame)
    meta: dict

    def __post_init__(self):
        self._rows = {key: row for row, key in enumerate(self.index)}
        if len(self._rows) != len(self.index):
            raise FormatError("sidecar index lists the same clip twice")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def row_for(self, video_id: str, start_frame: int) -> np.ndarray:
        try:
            return self.features[self._rows[(video_id, start_frame)]]
        except KeyError:
            raise AlignmentError(
                f"no feature record for clip ({video_id!r}, frame {start_frame})"
            ) from None


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


def read_feature_file(path: str | Path) -> FeatureTable:
    """Read and validate an MGF1 file and its sidecar index."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not an {MAGIC.decode()} feature file")
    version, count, dim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim < 1:
        raise FormatError(f"{path}: feature dimension must be positive")
    expected = 16 + 4 * count * dim
    if len(blob) != expected:
        raise FormatError(
            f"{path}: {len(blob)} bytes, header promises {expected} "
            f"({count} x {dim} float32 records)"
        )
    features = np.frombuffer(blob, dtype="<f4", offset=16).reshape(count, dim).copy()

    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"{path}: missing sidecar index {side.name}")
    try:
        doc = json.loads(side.read_text(encoding="utf-8"))
        records = doc["records"]
        meta = doc.get("meta", {})
        rows = [(int(r["row"]), str(r["video_id"]), int(r["start_frame"])) for r in records]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{side}: malformed sidecar ({exc})") from None
    if len(rows) != count or sorted(r[0] for r in rows) != list(range(count)):
        raise FormatError(
            f"{side}: index must cover rows 0..{count - 1} exactly once"
        )
    index: list[tuple[str, int]] = [("", 0)] * count
    for row, video_id, start_frame in rows:
        index[row] = (video_id, start_frame)
    return FeatureTable(features, index, meta)


def align_features(table: FeatureTable, clips, expected_dim: int | None = None) -> np.ndarray:
    """Feature matrix ordered like the clip set; every clip must resolve.

    ``expected_dim`` guards against wiring a file into the wrong role
    (e.g. a 3024-wide audio file where 400-wide video features belong).
    """
    if expected_dim is not None and table.dim != expected_dim:
        raise AlignmentError(
            f"feature file is {table.dim}-dimensional, this role needs {expected_dim}"
        )
    rows = [table.row_for(clip.video_id, clip.start_frame) for clip in clips.clips]
    if not rows:
        raise AlignmentError("clip set is empty")
    return np.stack(rows).astype(float)
