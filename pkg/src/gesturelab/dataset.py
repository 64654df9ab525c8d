"""Annotation parsing, frame-level label rasterization, and clip assembly.

Gesture annotations arrive as tab-delimited text exports with one labelled
time interval per line.  This module turns them into per-frame boolean
label matrices at a fixed frame rate, derives the residual "Normal play"
class, optionally folds fine classes into super-classes, cuts the frame
axis into non-overlapping 16-frame clips, and produces both binary and
temporally smoothed clip labels.  Splitting utilities and the label
inter-correlation analysis live here too.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classes import NORMAL_PLAY, SuperClassMap, normalize_label
from .errors import (
    ConfigError,
    ParseError,
    ValidationError,
    VocabularyError,
)

CLIP_FRAMES = 16
DEFAULT_FRAME_RATE = 25.0

# Tolerance (seconds) when deciding whether an annotation interval has
# positive-measure overlap with a frame.  Touching a frame boundary at a
# single point does not activate the frame.
_OVERLAP_TOL = 1e-9


@dataclass
class GestureAnnotation:
    """One labelled time interval from an annotation export."""

    label: str
    start: float
    end: float

    def __post_init__(self):
        if self.start < 0:
            raise ValidationError(f"annotation {self.label!r} starts at {self.start} < 0")
        if self.end <= self.start:
            raise ValidationError(
                f"annotation {self.label!r} has end {self.end} <= start {self.start}"
            )


@dataclass
class FrameLabelMatrix:
    """Per-frame boolean activity of each class, classes along axis 0."""

    video_id: str
    frame_rate: float
    class_names: tuple[str, ...]
    values: np.ndarray  # (C, T) bool

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        self.values = np.asarray(self.values, dtype=bool)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.class_names):
            raise ValidationError(
                f"label grid shape {self.values.shape} does not match "
                f"{len(self.class_names)} classes"
            )

    @property
    def frame_count(self) -> int:
        return self.values.shape[1]


@dataclass
class Clip:
    """16 consecutive frames with binary and smoothed per-class labels."""

    video_id: str
    start_frame: int
    frame_labels: np.ndarray  # (16, C) bool
    binary_labels: np.ndarray  # (C,) bool
    smoothed_labels: np.ndarray  # (C,) float


@dataclass
class ClipSet:
    clips: list[Clip]
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.clips)

    def binary_matrix(self) -> np.ndarray:
        """Clip-level binary labels as an (N, C) float array."""
        if not self.clips:
            return np.zeros((0, len(self.class_names)))
        return np.stack([c.binary_labels for c in self.clips]).astype(float)

    def smoothed_matrix(self) -> np.ndarray:
        """Clip-level temporally smoothed labels as an (N, C) float array."""
        if not self.clips:
            return np.zeros((0, len(self.class_names)))
        return np.stack([c.smoothed_labels for c in self.clips])


def parse_annotations(
    text: str,
    column_spec: Sequence[str] = ("label", "start", "end"),
) -> list[GestureAnnotation]:
    """Parse tab-delimited annotation text into a list of annotations.

    ``column_spec`` assigns a role to each column; it must mention
    "label", "start" and "end" exactly once each.  Other entries name
    ignored columns.  Blank lines are skipped.
    """
    roles: dict[str, int] = {}
    for i, role in enumerate(column_spec):
        if role in ("label", "start", "end"):
            if role in roles:
                raise ConfigError(f"column role {role!r} assigned twice")
            roles[role] = i
    missing = [r for r in ("label", "start", "end") if r not in roles]
    if missing:
        raise ConfigError(f"column spec {tuple(column_spec)} missing roles: {missing}")
    needed = max(roles.values()) + 1

    annotations: list[GestureAnnotation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < needed:
            raise ParseError(
                f"expected at least {needed} tab-separated columns, got {len(fields)}",
                line_number=lineno,
            )
        label = fields[roles["label"]].strip()
        if not label:
            raise ParseError("empty label", line_number=lineno)
        times: dict[str, float] = {}
        for role in ("start", "end"):
            cell = fields[roles[role]].strip()
            try:
                times[role] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{role} time {cell!r} is not a number", line_number=lineno
                ) from None
        if not (math.isfinite(times["start"]) and math.isfinite(times["end"])):
            raise ParseError("non-finite annotation time", line_number=lineno)
        if times["start"] < 0:
            raise ValidationError(f"line {lineno}: start time {times['start']} < 0")
        if times["end"] <= times["start"]:
            raise ValidationError(
                f"line {lineno}: end {times['end']} <= start {times['start']}"
            )
        annotations.append(GestureAnnotation(label, times["start"], times["end"]))
    return annotations


def read_annotation_file(
    path: str | Path,
    column_spec: Sequence[str] = ("label", "start", "end"),
) -> list[GestureAnnotation]:
    return parse_annotations(Path(path).read_text(encoding="utf-8"), column_spec)


def rasterize_labels(
    annotations: Iterable[GestureAnnotation],
    frame_rate: float,
    frame_count: int,
    class_names: Sequence[str],
    video_id: str = "video",
) -> FrameLabelMatrix:
    """Mark each frame whose interval overlaps an annotation with positive measure.

    Frame t covers [t/frame_rate, (t+1)/frame_rate).  Annotations running
    past the last frame are clipped with a warning; an unknown class name
    is an error.
    """
    if frame_rate <= 0:
        raise ValidationError(f"frame rate must be positive, got {frame_rate}")
    if frame_count < 1:
        raise ValidationError(f"frame count must be >= 1, got {frame_count}")
    index = {normalize_label(name): i for i, name in enumerate(class_names)}
    values = np.zeros((len(index), frame_count), dtype=bool)
    for ann in annotations:
        try:
            c = index[normalize_label(ann.label)]
        except KeyError:
            raise VocabularyError(
                f"unknown class {ann.label!r}; vocabulary: {list(class_names)}"
            ) from None
        first = math.floor(ann.start * frame_rate + _OVERLAP_TOL)
        last = math.ceil(ann.end * frame_rate - _OVERLAP_TOL) - 1
        if last > frame_count - 1 or first > frame_count - 1:
            warnings.warn(
                f"{video_id}: annotation {ann.label!r} [{ann.start}, {ann.end}] "
                f"runs past the last frame ({frame_count - 1}); clipped",
                stacklevel=2,
            )
        first = max(first, 0)
        last = min(last, frame_count - 1)
        if last >= first:
            values[c, first : last + 1] = True
    return FrameLabelMatrix(video_id, frame_rate, tuple(class_names), values)


def derive_normal_play(matrix: FrameLabelMatrix) -> FrameLabelMatrix:
    """Append the residual class, active exactly when nothing else is."""
    norms = [normalize_label(n) for n in matrix.class_names]
    if normalize_label(NORMAL_PLAY) in norms:
        raise ValidationError(f"matrix already contains a {NORMAL_PLAY!r} column")
    residual = ~matrix.values.any(axis=0)
    values = np.vstack([matrix.values, residual[None, :]])
    return FrameLabelMatrix(
        matrix.video_id,
        matrix.frame_rate,
        matrix.class_names + (NORMAL_PLAY,),
        values,
    )


def map_super_classes(matrix: FrameLabelMatrix, smap: SuperClassMap) -> FrameLabelMatrix:
    """Fold fine classes into super-classes; a super-class is active when
    any of its constituents is."""
    super_names = tuple(smap.super_names)
    position = {normalize_label(s): i for i, s in enumerate(super_names)}
    values = np.zeros((len(super_names), matrix.frame_count), dtype=bool)
    for row, fine in enumerate(matrix.class_names):
        super_name = smap.super_of(fine)  # raises for unmapped classes
        try:
            s = position[normalize_label(super_name)]
        except KeyError:
            raise VocabularyError(
                f"super-class {super_name!r} not in {list(super_names)}"
            ) from None
        values[s] |= matrix.values[row]
    return FrameLabelMatrix(matrix.video_id, matrix.frame_rate, super_names, values)


def temporal_smooth(frame_labels: np.ndarray) -> np.ndarray:
    """Weighted moving average of the 16 per-frame labels of one clip.

    Frame weights grow linearly with recency: the oldest frame weighs 1,
    the most recent weighs 16, and the weighted sum is divided by
    1+2+...+16 = 136.  Output per class lies in [0, 1] and is 0 exactly
    when the class appears in no frame.
    """
    labels = np.asarray(frame_labels, dtype=float)
    if labels.ndim != 2 or labels.shape[0] != CLIP_FRAMES:
        raise ValidationError(
            f"expected a ({CLIP_FRAMES}, C) frame-label grid, got shape {labels.shape}"
        )
    weights = np.arange(1, CLIP_FRAMES + 1, dtype=float)
    return weights @ labels / weights.sum()


def assemble_clips(matrix: FrameLabelMatrix) -> ClipSet:
    """Cut the frame axis into consecutive non-overlapping 16-frame clips.

    Trailing frames that do not fill a clip are dropped.
    """
    T = matrix.frame_count
    if T < CLIP_FRAMES:
        raise ValidationError(
            f"{matrix.video_id}: {T} frames is fewer than one clip ({CLIP_FRAMES})"
        )
    clips: list[Clip] = []
    for k in range(T // CLIP_FRAMES):
        start = k * CLIP_FRAMES
        frames = matrix.values[:, start : start + CLIP_FRAMES].T  # (16, C)
        clips.append(
            Clip(
                video_id=matrix.video_id,
                start_frame=start,
                frame_labels=frames,
                binary_labels=frames.any(axis=0),
                smoothed_labels=temporal_smooth(frames),
            )
        )
    return ClipSet(clips, matrix.class_names)


def _bucket_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Integer subset sizes for n items: every bucket after the first gets
    the floor of its quota and the first bucket absorbs the remainder."""
    if any(r < 0 for r in ratios):
        raise ValidationError(f"ratios must be non-negative, got {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios {tuple(ratios)} do not sum to 1")
    tail = [math.floor(n * r) for r in ratios[1:]]
    first = n - sum(tail)
    if first < 0:
        raise ValidationError(f"ratios {tuple(ratios)} oversubscribe {n} items")
    return [first] + tail


def split_dataset(
    clip_set: ClipSet,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[ClipSet, ClipSet, ClipSet]:
    """Shuffle the clips with the given seed and partition them by ratio
    into train / validation / test."""
    n = len(clip_set)
    if n < 10:
        raise ValidationError(f"need at least 10 clips to split, got {n}")
    if len(ratios) != 3:
        raise ValidationError(f"expected 3 ratios, got {len(ratios)}")
    sizes = _bucket_sizes(n, ratios)
    order = np.random.default_rng(seed).permutation(n)
    subsets: list[ClipSet] = []
    stop = 0
    for size in sizes:
        start, stop = stop, stop + size
        subsets.append(
            ClipSet([clip_set.clips[i] for i in order[start:stop]], clip_set.class_names)
        )
    return subsets[0], subsets[1], subsets[2]


def leave_one_out_split(
    clip_sets: Sequence[ClipSet],
    held_out: str,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> tuple[ClipSet, ClipSet, ClipSet]:
    """Hold one whole video out as the test set; split the rest into
    train / validation by ``val_fraction``."""
    if len(clip_sets) < 2:
        raise ValidationError("leave-one-out needs at least 2 videos")
    if not 0 < val_fraction < 1:
        raise ValidationError(f"val_fraction must be in (0, 1), got {val_fraction}")
    names = set()
    for cs in clip_sets:
        if cs.class_names != clip_sets[0].class_names:
            raise ValidationError("videos disagree on class names")
        names.update(c.video_id for c in cs.clips)
    video_ids = [cs.clips[0].video_id for cs in clip_sets if cs.clips]
    if held_out not in video_ids:
        raise ValidationError(f"unknown video {held_out!r}; videos: {sorted(names)}")

    class_names = clip_sets[0].class_names
    test_clips: list[Clip] = []
    pool: list[Clip] = []
    for cs in clip_sets:
        for clip in cs.clips:
            (test_clips if clip.video_id == held_out else pool).append(clip)

    train_size, val_size = _bucket_sizes(len(pool), (1.0 - val_fraction, val_fraction))
    order = np.random.default_rng(seed).permutation(len(pool))
    train = ClipSet([pool[i] for i in order[:train_size]], class_names)
    val = ClipSet([pool[i] for i in order[train_size:]], class_names)
    assert len(val) == val_size
    return train, val, ClipSet(test_clips, class_names)


@dataclass
class CorrelationResult:
    values: np.ndarray  # (C, C) Pearson correlations
    class_names: tuple[str, ...]
    zero_variance: tuple[str, ...]  # classes constant over all frames


def intercorrelation(matrix: FrameLabelMatrix) -> CorrelationResult:
    """Pearson correlation between the frame-indicator vectors of each
    class pair.  Classes active in all frames or none have no defined
    correlation; their off-diagonal entries are 0 and they are flagged."""
    if matrix.frame_count < 2:
        raise ValidationError("correlation needs at least 2 frames")
    x = matrix.values.astype(float)
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    flat = norms == 0
    safe = np.where(flat, 1.0, norms)
    r = (centered @ centered.T) / np.outer(safe, safe)
    r[flat, :] = 0.0
    r[:, flat] = 0.0
    np.clip(r, -1.0, 1.0, out=r)
    np.fill_diagonal(r, 1.0)
    zero_variance = tuple(n for n, f in zip(matrix.class_names, flat) if f)
    return CorrelationResult(r, matrix.class_names, zero_variance)


def write_label_csv(matrix: FrameLabelMatrix, path: str | Path) -> None:
    """One row per frame, one 0/1 column per class."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(matrix.class_names)
        for t in range(matrix.frame_count):
            writer.writerow(matrix.values[:, t].astype(int).tolist())


def read_label_csv(
    path: str | Path,
    video_id: str = "video",
    frame_rate: float = DEFAULT_FRAME_RATE,
) -> FrameLabelMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty label file") from None
        rows: list[list[bool]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: expected {len(header)} cells, got {len(row)}",
                    line_number=lineno,
                )
            parsed: list[bool] = []
            for cell in row:
                if cell not in ("0", "1"):
                    raise ParseError(
                        f"{path}: label cell must be 0 or 1, got {cell!r}",
                        line_number=lineno,
                    )
                parsed.append(cell == "1")
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: no frame rows")
    values = np.array(rows, dtype=bool).T
    return FrameLabelMatrix(video_id, frame_rate, tuple(header), values)


def write_correlation_csv(result: CorrelationResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", *result.class_names])
        for name, row in zip(result.class_names, result.values):
            writer.writerow([name, *(format(v, ".10g") for v in row)])


def write_clip_index(clip_set: ClipSet, path: str | Path) -> None:
    """One row per clip: identity plus binary (b:) and smoothed (ts:)
    labels.  Floats are written with repr so reading restores them
    bit-exactly."""
    names = clip_set.class_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["video_id", "start_frame"]
            + [f"b:{n}" for n in names]
            + [f"ts:{n}" for n in names]
        )
        for clip in clip_set.clips:
            writer.writerow(
                [clip.video_id, clip.start_frame]
                + [int(v) for v in clip.binary_labels]
                + [repr(float(v)) for v in clip.smoothed_labels]
            )


def read_clip_index(path: str | Path) -> ClipSet:
    """Rebuild a ClipSet from a clip-index CSV.

    The CSV carries clip-level labels only, so the restored clips have
    no per-frame matrices (frame_labels is None).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty clip index") from None
        if header[:2] != ["video_id", "start_frame"]:
            raise ParseError(f"{path}: clip index must start with video_id,start_frame")
        binary_cols = [h[2:] for h in header[2:] if h.startswith("b:")]
        smooth_cols = [h[3:] for h in header[2:] if h.startswith("ts:")]
        if not binary_cols or binary_cols != smooth_cols:
            raise ParseError(f"{path}: b: and ts: columns must list the same classes")
        if header[2:] != [f"b:{n}" for n in binary_cols] + [f"ts:{n}" for n in binary_cols]:
            raise ParseError(f"{path}: clip index columns out of order")
        n = len(binary_cols)
        clips: list[Clip] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2 + 2 * n:
                raise ParseError(
                    f"{path}: expected {2 + 2 * n} cells, got {len(row)}",
                    line_number=lineno,
                )
            try:
                start_frame = int(row[1])
                binary = np.array([int(cell) for cell in row[2 : 2 + n]], dtype=bool)
                smoothed = np.array([float(cell) for cell in row[2 + n :]])
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line_number=lineno) from None
            clips.append(Clip(row[0], start_frame, None, binary, smoothed))
    return ClipSet(tuple(clips), tuple(binary_cols))


def group_by_video(clip_set: ClipSet) -> list[ClipSet]:
    """Partition a clip set by video id, in first-appearance order."""
    order: dict[str, list[Clip]] = {}
    for clip in clip_set.clips:
        order.setdefault(clip.video_id, []).append(clip)
    return [ClipSet(tuple(clips), clip_set.class_names) for clips in order.values()]
