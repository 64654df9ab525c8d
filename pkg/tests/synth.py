"""Synthetic, linearly separable clip datasets for training tests.

Each class owns a random feature prototype; a clip's features are the
sum of its active classes' prototypes plus noise, so a small network
can drive the training loss toward zero.  Prototypes are shared across
the train/validation/test subsets, which keeps the task learnable out
of sample.
"""

import numpy as np

from gesturelab.dataset import Clip, ClipSet, temporal_smooth
from gesturelab.trainer import ExperimentData, Subset, derive_seed


def class_names(n_classes):
    return tuple(f"g{i:02d}" for i in range(n_classes))


def _make_subset(
    prototypes,
    audio_prototypes,
    n_clips,
    seed,
    video_id,
    label_density,
    noise,
    partial_frames,
):
    rng = np.random.default_rng(seed)
    n_classes, video_dim = prototypes.shape
    clips = []
    video = np.zeros((n_clips, video_dim))
    audio = None
    if audio_prototypes is not None:
        audio = np.zeros((n_clips, audio_prototypes.shape[1]))
    for i in range(n_clips):
        active = rng.random(n_classes) < label_density
        active[i % n_classes] = True  # every class keeps nonzero support
        frames = np.zeros((16, n_classes))
        frames[:, active] = 1.0
        if partial_frames:
            for c in np.flatnonzero(active):
                frames[: rng.integers(0, 8), c] = 0.0
        weights = active.astype(float)
        video[i] = weights @ prototypes + noise * rng.standard_normal(video_dim)
        if audio is not None:
            audio[i] = weights @ audio_prototypes + noise * rng.standard_normal(
                audio_prototypes.shape[1]
            )
        clips.append(
            Clip(
                video_id=video_id,
                start_frame=16 * i,
                frame_labels=frames,
                binary_labels=frames.any(axis=0),
                smoothed_labels=temporal_smooth(frames),
            )
        )
    clip_set = ClipSet(tuple(clips), class_names(n_classes))
    return Subset(clips=clip_set, video=video, audio=audio)


def make_experiment_data(
    n_train=32,
    n_val=16,
    n_test=16,
    n_classes=3,
    video_dim=24,
    audio_dim=None,
    seed=0,
    label_density=0.25,
    noise=0.05,
    partial_frames=False,
):
    rng = np.random.default_rng(derive_seed(seed, 100))
    prototypes = rng.standard_normal((n_classes, video_dim))
    audio_prototypes = None
    if audio_dim is not None:
        audio_prototypes = rng.standard_normal((n_classes, audio_dim))
    subsets = []
    for part, (name, count) in enumerate(
        [("train", n_train), ("val", n_val), ("test", n_test)]
    ):
        subsets.append(
            _make_subset(
                prototypes,
                audio_prototypes,
                count,
                derive_seed(seed, 101 + part),
                name,
                label_density,
                noise,
                partial_frames,
            )
        )
    return ExperimentData(
        train=subsets[0],
        validation=subsets[1],
        test=subsets[2],
        class_names=class_names(n_classes),
    )


def make_imbalanced_data(
    n_train=128,
    n_val=64,
    n_test=64,
    rare_ratio=32,
    video_dim=24,
    seed=0,
    noise=0.05,
):
    """Two-class task where the rare class co-occurs with the common one
    in 1 of rare_ratio clips, starting partway through the clip."""
    rng = np.random.default_rng(derive_seed(seed, 200))
    prototypes = rng.standard_normal((2, video_dim))

    def subset(count, part_seed, video_id):
        part_rng = np.random.default_rng(part_seed)
        clips = []
        video = np.zeros((count, video_dim))
        for i in range(count):
            rare = i % rare_ratio == 0
            active = np.array([True, rare])
            frames = np.zeros((16, 2))
            frames[:, 0] = 1.0
            if rare:
                frames[4:, 1] = 1.0  # rare gesture starts mid-clip
            video[i] = active.astype(float) @ prototypes
            video[i] += noise * part_rng.standard_normal(video_dim)
            clips.append(
                Clip(
                    video_id=video_id,
                    start_frame=16 * i,
                    frame_labels=frames,
                    binary_labels=frames.any(axis=0),
                    smoothed_labels=temporal_smooth(frames),
                )
            )
        order = part_rng.permutation(count)
        clips = tuple(clips[j] for j in order)
        video = video[order]
        return Subset(clips=ClipSet(clips, class_names(2)), video=video)

    return ExperimentData(
        train=subset(n_train, derive_seed(seed, 201), "train"),
        validation=subset(n_val, derive_seed(seed, 202), "val"),
        test=subset(n_test, derive_seed(seed, 203), "test"),
        class_names=class_names(2),
    )
