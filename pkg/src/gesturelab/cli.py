"""Command-line pipeline surface.

prepare        annotation exports -> label matrices, clip indexes, stats
extract-audio  WAV -> per-clip timbral feature file (MGF1)
correlate      label matrix -> class inter-correlation CSV
train          one experiment arm -> checkpoints + reports
evaluate       saved checkpoints -> report for one subset
protocol       arms x class modes x splits -> one directory per cell

Commands validate their inputs before writing anything, write only under
--out, and produce byte-identical outputs for identical inputs.  Errors
exit nonzero with a category-specific code (see EXIT_CODES).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio import SAMPLE_RATE, extract_clip_features, read_wav
from .classes import (
    ANNOTATED_CLASSES,
    DEFAULT_SUPER_CLASS_MAP,
    NORMAL_PLAY,
    load_super_class_map,
    load_vocabulary,
    normalize_label,
)
from .dataset import (
    _OVERLAP_TOL,
    DEFAULT_FRAME_RATE,
    ClipSet,
    assemble_clips,
    derive_normal_play,
    group_by_video,
    intercorrelation,
    leave_one_out_split,
    map_super_classes,
    rasterize_labels,
    read_annotation_file,
    read_clip_index,
    read_label_csv,
    split_dataset,
    write_clip_index,
    write_correlation_csv,
    write_label_csv,
)
from .errors import ConfigError, GestureLabError
from .metrics import write_report_csv, write_report_text
from .mgf1 import align_features, read_feature_file, write_feature_file
from .trainer import (
    ARMS,
    ExperimentConfig,
    ExperimentData,
    Subset,
    cell_name,
    evaluate,
    load_cell_nets,
    run_cell,
    run_protocol,
)

SEED_VARIABLE = "GESTURELAB_SEED"

EXIT_CODES = {
    "error": 1,
    "config": 2,
    "parse": 3,
    "validation": 4,
    "vocabulary": 5,
    "shape": 6,
    "format": 7,
    "alignment": 8,
}


def default_seed() -> int:
    raw = os.environ.get(SEED_VARIABLE)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_VARIABLE} must be an integer, got {raw!r}") from None


# ------------------------------------------------------------- prepare

def _infer_frame_count(annotations, fps: float) -> int:
    if not annotations:
        raise ConfigError(
            "cannot infer the frame count of an empty annotation file; pass --frames"
        )
    return max(math.ceil(a.end * fps - _OVERLAP_TOL) for a in annotations)


def cmd_prepare(args) -> int:
    vocabulary = (
        load_vocabulary(args.classes) if args.classes else tuple(ANNOTATED_CLASSES)
    )
    smap = (
        load_super_class_map(args.superclass_map)
        if args.superclass_map
        else DEFAULT_SUPER_CLASS_MAP
    )
    if args.frames and len(args.frames) != len(args.annotations):
        raise ConfigError(
            f"--frames given {len(args.frames)} times for {len(args.annotations)} "
            "annotation files"
        )

    # compute everything first; write only when every input parsed
    prepared = []
    occurrences: dict[str, int] = {normalize_label(c): 0 for c in vocabulary}
    for i, path in enumerate(args.annotations):
        video_id = Path(path).stem
        annotations = read_annotation_file(path)
        frame_count = args.frames[i] if args.frames else _infer_frame_count(
            annotations, args.fps
        )
        fine = derive_normal_play(
            rasterize_labels(annotations, args.fps, frame_count, vocabulary, video_id)
        )
        coarse = map_super_classes(fine, smap)
        for note in annotations:
            occurrences[normalize_label(note.label)] += 1
        prepared.append((video_id, fine, coarse))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fine_clips: list = []
    coarse_clips: list = []
    for video_id, fine, coarse in prepared:
        write_label_csv(fine, out / f"labels_{video_id}.csv")
        write_label_csv(coarse, out / f"labels_super_{video_id}.csv")
        fine_clips.extend(assemble_clips(fine).clips)
        coarse_clips.extend(assemble_clips(coarse).clips)
    fine_set = ClipSet(tuple(fine_clips), prepared[0][1].class_names)
    coarse_set = ClipSet(tuple(coarse_clips), prepared[0][2].class_names)
    write_clip_index(fine_set, out / "clips_fine.csv")
    write_clip_index(coarse_set, out / "clips_super.csv")
    _write_class_stats(prepared, occurrences, args.fps, out / "stats_classes.csv")
    _write_super_stats(coarse_set, out / "stats_super.csv")

    for video_id, fine, _ in prepared:
        clip_count = fine.frame_count // 16
        print(f"{video_id}: {fine.frame_count} frames, {clip_count} clips")
    print(f"total: {len(fine_set)} fine clips, {len(coarse_set)} super clips")
    return 0


def _write_class_stats(prepared, occurrences, fps, path) -> None:
    """Per-class interval counts and active screen time.  The residual
    class has no annotated intervals, so its occurrence cell is '-'."""
    import csv

    class_names = prepared[0][1].class_names
    frames = np.zeros(len(class_names), dtype=int)
    for _, fine, _ in prepared:
        frames += fine.values.sum(axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "occurrences", "frames", "seconds"])
        for row, name in enumerate(class_names):
            if normalize_label(name) == normalize_label(NORMAL_PLAY):
                count = "-"
            else:
                count = occurrences[normalize_label(name)]
            writer.writerow(
                [name, count, int(frames[row]), format(frames[row] / fps, ".2f")]
            )


def _write_super_stats(coarse_set: ClipSet, path) -> None:
    import csv

    counts = coarse_set.binary_matrix().sum(axis=0).astype(int)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["super_class", "clips"])
        for name, count in zip(coarse_set.class_names, counts):
            writer.writerow([name, int(count)])


# ------------------------------------------------------- extract-audio

def cmd_extract_audio(args) -> int:
    clip_set = read_clip_index(args.clips)
    groups = {g.clips[0].video_id: g for g in group_by_video(clip_set)}
    if args.video:
        if args.video not in groups:
            raise ConfigError(
                f"video {args.video!r} not in clip index; have {sorted(groups)}"
            )
        selected = groups[args.video]
    elif len(groups) == 1:
        selected = next(iter(groups.values()))
    else:
        raise ConfigError(
            f"clip index covers several videos ({sorted(groups)}); pass --video"
        )
    samples, rate = read_wav(
        args.wav, expected_rate=SAMPLE_RATE, allow_resample=args.allow_resample
    )
    features = extract_clip_features(samples, rate, clip_count=len(selected))
    index = [(c.video_id, c.start_frame) for c in selected.clips]
    write_feature_file(
        args.out,
        features,
        index,
        meta={"role": "audio", "source": Path(args.wav).name},
    )
    print(f"{args.out}: {len(index)} records of dim {features.shape[1]}")
    return 0


# ----------------------------------------------------------- correlate

def cmd_correlate(args) -> int:
    matrix = read_label_csv(args.labels)
    if args.level == "super":
        smap = (
            load_super_class_map(args.superclass_map)
            if args.superclass_map
            else DEFAULT_SUPER_CLASS_MAP
        )
        matrix = map_super_classes(matrix, smap)
    result = intercorrelation(matrix)
    write_correlation_csv(result, args.out)
    if result.zero_variance:
        print(f"constant classes (correlation undefined): {result.zero_variance}")
    print(f"{args.out}: {len(result.class_names)}x{len(result.class_names)} matrix")
    return 0


# ------------------------------------------------------ train/evaluate

CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_config_value(name: str, raw: str):
    field = CONFIG_FIELDS[name]
    raw = raw.strip()
    kind = str(field.type)
    if name == "held_out":
        return raw or None
    if "tuple" in kind:
        parts = [p for p in raw.split(",") if p]
        return tuple(float(p) if "." in p or "e" in p else int(p) for p in parts)
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def read_config_file(path: str | Path) -> dict:
    """key = value lines using ExperimentConfig field names."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in CONFIG_FIELDS:
            raise ConfigError(
                f"{path}:{lineno}: unknown config key {key!r}; "
                f"valid keys: {sorted(CONFIG_FIELDS)}"
            )
        try:
            values[key] = _parse_config_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def build_config(args, **overrides) -> ExperimentConfig:
    """Defaults, then --config file entries, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    values.update(overrides)
    if "seed" not in values:
        values["seed"] = default_seed()
    return ExperimentConfig(**values)


EXPECTED_CLASS_COUNTS = {"fine18": 18, "super7": 7}


def load_experiment_data(
    clips_path,
    features_path,
    audio_path,
    config: ExperimentConfig,
) -> ExperimentData:
    clip_set = read_clip_index(clips_path)
    expected = EXPECTED_CLASS_COUNTS[config.class_mode]
    if len(clip_set.class_names) != expected:
        raise ConfigError(
            f"class mode {config.class_mode} expects {expected} classes; "
            f"{clips_path} lists {len(clip_set.class_names)}"
        )
    if config.split == "holdout":
        parts = split_dataset(clip_set, config.ratios, config.seed)
    else:
        parts = leave_one_out_split(
            group_by_video(clip_set), config.held_out, config.val_fraction, config.seed
        )
    table = read_feature_file(features_path)
    audio_table = read_feature_file(audio_path) if audio_path else None
    subsets = []
    for part in parts:
        video = align_features(table, part, expected_dim=config.video_dim)
        audio = (
            align_features(audio_table, part, expected_dim=config.audio_dim)
            if audio_table is not None
            else None
        )
        subsets.append(Subset(clips=part, video=video, audio=audio))
    return ExperimentData(*subsets, class_names=clip_set.class_names)


def cmd_train(args) -> int:
    config = build_config(args)
    data = load_experiment_data(args.clips, args.features, args.audio_features, config)
    result = run_cell(config, data, Path(args.out), force=args.force)
    print(f"{result.name}: {result.status}, test macro-F1 {result.test_macro_f1:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    config = build_config(args)
    data = load_experiment_data(args.clips, args.features, args.audio_features, config)
    nets = load_cell_nets(args.cell)
    subset = data.subsets()[args.subset]
    report = evaluate(
        nets, subset, config, data.class_names, split=args.subset, tag=cell_name(config)
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / f"report_{args.subset}.csv")
    write_report_text(report, out / f"report_{args.subset}.txt")
    print(f"{args.subset} macro-F1 {report.macro_f1:.4f} over {len(subset)} clips")
    return 0


def cmd_protocol(args) -> int:
    modes = []
    if args.clips_fine:
        modes.append(("fine18", args.clips_fine))
    if args.clips_super:
        modes.append(("super7", args.clips_super))
    if not modes:
        raise ConfigError("pass --clips-fine and/or --clips-super")
    arms = args.arms.split(",") if args.arms else list(ARMS)
    for arm in arms:
        if arm not in ARMS:
            raise ConfigError(f"unknown arm {arm!r}; choose from {ARMS}")

    file_values = read_config_file(args.config) if args.config else {}
    split = args.split or file_values.get("split", "holdout")

    cells = []
    for class_mode, clips_path in modes:
        held_outs: list[str | None] = [None]
        if split == "leave_one_out":
            held_outs = [
                g.clips[0].video_id for g in group_by_video(read_clip_index(clips_path))
            ]
        for held_out in held_outs:
            config = build_config(
                args, arm=arms[0], class_mode=class_mode, held_out=held_out
            )
            data = load_experiment_data(
                clips_path, args.features, args.audio_features, config
            )
            for arm in arms:
                cells.append((dataclasses.replace(config, arm=arm), data))

    results = run_protocol(cells, Path(args.out), force=args.force)
    failed = 0
    for result in results:
        if result.status == "failed":
            failed += 1
            print(f"{result.name}: FAILED ({result.error})")
        else:
            print(f"{result.name}: {result.status}, test macro-F1 {result.test_macro_f1:.4f}")
    print(f"{len(results) - failed}/{len(results)} cells succeeded")
    return 1 if failed else 0


# ---------------------------------------------------------- arg wiring

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per ExperimentConfig field (defaults resolved later, so
    absent flags do not mask --config file entries)."""
    parser.add_argument("--config", help="key = value file with ExperimentConfig fields")
    parser.add_argument("--arm", choices=ARMS)
    parser.add_argument("--class-mode", dest="class_mode", choices=("fine18", "super7"))
    parser.add_argument("--split", choices=("holdout", "leave_one_out"))
    parser.add_argument("--held-out", dest="held_out")
    parser.add_argument("--ratios", type=_ratio_tuple)
    parser.add_argument("--val-fraction", dest="val_fraction", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--dropout", type=float)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--positive-threshold", dest="positive_threshold", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--hidden-dims", dest="hidden_dims", type=_int_tuple)
    parser.add_argument(
        "--encoder-hidden-dims", dest="encoder_hidden_dims", type=_int_tuple
    )
    parser.add_argument("--encoder-output-dim", dest="encoder_output_dim", type=int)
    parser.add_argument("--video-dim", dest="video_dim", type=int)
    parser.add_argument("--audio-dim", dest="audio_dim", type=int)
    parser.add_argument(
        "--use-class-weights",
        dest="use_class_weights",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    parser.add_argument(
        "--factor-positive-only",
        dest="factor_positive_only",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    parser.add_argument(
        "--include-zero-support",
        dest="include_zero_support",
        action=argparse.BooleanOptionalAction,
        default=None,
    )


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--clips", required=True, help="clip index CSV from prepare")
    parser.add_argument("--features", required=True, help="video feature MGF1 file")
    parser.add_argument(
        "--audio-features", dest="audio_features", help="audio feature MGF1 file"
    )


def _int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.split(",") if p)


def _ratio_tuple(raw: str) -> tuple[float, ...]:
    return tuple(float(p) for p in raw.split(",") if p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gesturelab",
        description="Gesture-labelling pipeline: prepare data, extract audio "
        "features, train and score the experiment arms.",
    )
    parser.add_argument("--version", action="version", version=f"gesturelab {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("prepare", help="annotations -> labels, clips, stats")
    p.add_argument("--annotations", nargs="+", required=True)
    p.add_argument("--fps", type=float, default=DEFAULT_FRAME_RATE)
    p.add_argument("--frames", type=int, nargs="+")
    p.add_argument("--classes", help="vocabulary file, one class per line")
    p.add_argument("--superclass-map", dest="superclass_map")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = commands.add_parser("extract-audio", help="WAV -> audio feature MGF1")
    p.add_argument("--wav", required=True)
    p.add_argument("--clips", required=True)
    p.add_argument("--video", help="video id when the index covers several")
    p.add_argument("--allow-resample", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_audio)

    p = commands.add_parser("correlate", help="label matrix -> correlation CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--level", choices=("fine", "super"), default="fine")
    p.add_argument("--superclass-map", dest="superclass_map")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = commands.add_parser("train", help="train one experiment arm")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", help="score saved checkpoints")
    p.add_argument("--cell", required=True, help="directory written by train")
    _add_data_flags(p)
    _add_config_flags(p)
    p.add_argument("--subset", choices=("train", "validation", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("protocol", help="run arms x class modes x splits")
    p.add_argument("--clips-fine", dest="clips_fine")
    p.add_argument("--clips-super", dest="clips_super")
    p.add_argument("--features", required=True)
    p.add_argument("--audio-features", dest="audio_features")
    p.add_argument("--arms", help="comma list, default all four")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_protocol)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GestureLabError as exc:
        print(f"gesturelab: {exc.category} error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"gesturelab: io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
