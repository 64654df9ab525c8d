"""Experiment orchestration: arms, epoch loops, checkpoints, reports.

Four arms share one loop.  sm trains a classifier on clip features with
plain per-class MSE and binary targets; sm_bb switches the loss to
dynamic batch balancing; sm_bb_ts additionally smooths the training
targets along the clip's frames; bimodal_sm_bb_ts feeds the classifier
the concatenation of the clip features with a jointly trained audio
encoding.  Evaluation is always against binary labels, without dropout
and without balancing.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dbb, mgf1
from .dataset import ClipSet
from .errors import ConfigError, GestureLabError, ValidationError
from .metrics import MetricsReport, compute_report, write_comparison_csv, write_report_csv
from .nn import (
    AdamState,
    DenseNet,
    adam_step,
    backward,
    build_architecture,
    forward,
    forward_train,
    load_checkpoint,
    save_checkpoint,
)

ARMS = ("sm", "sm_bb", "sm_bb_ts", "bimodal_sm_bb_ts")
CLASS_MODES = ("fine18", "super7")
SPLIT_KINDS = ("holdout", "leave_one_out")


@dataclass
class ExperimentConfig:
    arm: str = "sm"
    class_mode: str = "fine18"
    split: str = "holdout"
    held_out: str | None = None
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    val_fraction: float = 0.1
    batch_size: int = 32
    learning_rate: float = 0.001
    # full-scale runs used 3000 epochs; the default keeps a desk-scale
    # run tractable and is recorded in the manifest
    epochs: int = 200
    weight_decay: float = 1e-2
    dropout: float = 0.3
    threshold: float = 0.5
    positive_threshold: float = 0.0
    seed: int = 0
    hidden_dims: tuple[int, ...] = (256, 128, 64)
    encoder_hidden_dims: tuple[int, ...] = (1024, 512, 512)
    encoder_output_dim: int = 400
    video_dim: int = mgf1.VIDEO_FEATURE_DIM
    audio_dim: int = mgf1.AUDIO_FEATURE_DIM
    use_class_weights: bool = False
    factor_positive_only: bool = False
    include_zero_support: bool = False

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ConfigError(f"unknown arm {self.arm!r}; choose from {ARMS}")
        if self.class_mode not in CLASS_MODES:
            raise ConfigError(
                f"unknown class mode {self.class_mode!r}; choose from {CLASS_MODES}"
            )
        if self.split not in SPLIT_KINDS:
            raise ConfigError(f"unknown split {self.split!r}; choose from {SPLIT_KINDS}")
        if self.split == "leave_one_out" and not self.held_out:
            raise ConfigError("leave_one_out split needs held_out video id")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")

    @property
    def uses_dbb(self) -> bool:
        return "_bb" in self.arm

    @property
    def uses_smoothing(self) -> bool:
        return self.arm.endswith("_ts")

    @property
    def bimodal(self) -> bool:
        return self.arm.startswith("bimodal")


@dataclass
class Subset:
    """Clips of one split with their aligned per-clip input features."""

    clips: ClipSet
    video: np.ndarray | None = None  # (N, video_dim)
    audio: np.ndarray | None = None  # (N, audio_dim)

    def __len__(self) -> int:
        return len(self.clips)


@dataclass
class ExperimentData:
    train: Subset
    validation: Subset
    test: Subset
    class_names: tuple[str, ...]

    def subsets(self) -> dict[str, Subset]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


@dataclass
class TrainResult:
    nets: dict[str, DenseNet]
    log: list[tuple[int, float, float]]  # (epoch, train_loss, val_macro_f1)
    best_epoch: int
    best_val_f1: float
    class_weights: np.ndarray | None = None


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from a tuple of ints/strings.

    Hash-based rather than SeedSequence-based: entropy lists treat
    trailing zeros as equal ([0] vs [0, 0]), and str.__hash__ is salted
    per process.  Type tags keep 1 and "1" distinct.
    """
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            digest.update(b"s" + part.encode() + b"\x00")
        else:
            digest.update(b"i" + int(part).to_bytes(16, "little", signed=True))
    return int.from_bytes(digest.digest()[:4], "little")


def make_targets(clips: ClipSet, arm: str) -> np.ndarray:
    """Training targets: any-frame binary labels, or the temporally
    smoothed ones for *_ts arms."""
    if arm not in ARMS:
        raise ConfigError(f"unknown arm {arm!r}")
    return clips.smoothed_matrix() if arm.endswith("_ts") else clips.binary_matrix()


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _check_data(config: ExperimentConfig, data: ExperimentData) -> None:
    for name, subset in data.subsets().items():
        _require(len(subset) > 0, f"{name} subset is empty")
        _require(
            subset.video is not None and subset.video.shape == (len(subset), config.video_dim),
            f"{name} subset needs ({len(subset)}, {config.video_dim}) clip features",
        )
        if config.bimodal:
            _require(
                subset.audio is not None
                and subset.audio.shape == (len(subset), config.audio_dim),
                f"{name} subset needs ({len(subset)}, {config.audio_dim}) audio features",
            )


def build_nets(config: ExperimentConfig, n_classes: int) -> dict[str, DenseNet]:
    if config.bimodal:
        encoder = build_architecture(
            "audio_encoder",
            input_dim=config.audio_dim,
            hidden_dims=config.encoder_hidden_dims,
            output_dim=config.encoder_output_dim,
            dropout=config.dropout,
            seed=derive_seed(config.seed, 2),
        )
        fusion = build_architecture(
            "fusion_classifier",
            n_classes=n_classes,
            input_dim=config.video_dim + config.encoder_output_dim,
            hidden_dims=config.hidden_dims,
            dropout=config.dropout,
            seed=derive_seed(config.seed, 1),
        )
        return {"encoder": encoder, "classifier": fusion}
    classifier = build_architecture(
        "classifier",
        n_classes=n_classes,
        input_dim=config.video_dim,
        hidden_dims=config.hidden_dims,
        dropout=config.dropout,
        seed=derive_seed(config.seed, 1),
    )
    return {"classifier": classifier}


def predict(nets: dict[str, DenseNet], subset: Subset) -> np.ndarray:
    """Eval-mode outputs for one subset; consumes no randomness."""
    if "encoder" in nets:
        encoded = forward(nets["encoder"], subset.audio)
        inputs = np.concatenate([subset.video, encoded], axis=1)
    else:
        inputs = subset.video
    return forward(nets["classifier"], inputs)


def _batch_forward(
    nets: dict[str, DenseNet], subset: Subset, rows: np.ndarray, seed_parts: tuple
):
    """Train-mode forward over one batch; returns (outputs, caches)."""
    caches = {}
    if "encoder" in nets:
        enc_cache = forward_train(
            nets["encoder"], subset.audio[rows], derive_seed(*seed_parts, 1)
        )
        fused = np.concatenate([subset.video[rows], enc_cache.outputs], axis=1)
        clf_cache = forward_train(nets["classifier"], fused, derive_seed(*seed_parts, 2))
        caches["encoder"] = enc_cache
    else:
        clf_cache = forward_train(
            nets["classifier"], subset.video[rows], derive_seed(*seed_parts, 2)
        )
    caches["classifier"] = clf_cache
    return clf_cache.outputs, caches


def _all_params(nets: dict[str, DenseNet]) -> list[np.ndarray]:
    params: list[np.ndarray] = []
    for name in sorted(nets):
        params.extend(nets[name].parameters())
    return params


def _batch_backward(
    nets: dict[str, DenseNet], caches: dict, grad: np.ndarray, video_dim: int
) -> list[np.ndarray]:
    """Gradients ordered like _all_params (alphabetical net names)."""
    by_net = {}
    by_net["classifier"], input_grad = backward(
        nets["classifier"], caches["classifier"], grad
    )
    if "encoder" in nets:
        # only the encoded half of the fused input propagates further;
        # the clip features are frozen inputs
        by_net["encoder"], _ = backward(
            nets["encoder"], caches["encoder"], input_grad[:, video_dim:]
        )
    flat: list[np.ndarray] = []
    for name in sorted(nets):
        flat.extend(by_net[name])
    return flat


def train(config: ExperimentConfig, data: ExperimentData) -> TrainResult:
    """Run one experiment arm; returns best-validation networks and the log."""
    _check_data(config, data)
    n_classes = len(data.class_names)
    nets = build_nets(config, n_classes)
    params = _all_params(nets)
    state = AdamState.init(params, config.learning_rate, config.weight_decay)

    targets = make_targets(data.train.clips, config.arm)
    val_truth = data.validation.clips.binary_matrix().astype(bool)
    weights = None
    if config.uses_dbb and config.use_class_weights:
        weights = dbb.class_weights(targets, config.positive_threshold)

    n = len(data.train)
    log: list[tuple[int, float, float]] = []
    best_epoch = -1
    best_val = -1.0
    best_params: list[np.ndarray] | None = None
    for epoch in range(config.epochs):
        order = np.random.default_rng(derive_seed(config.seed, 3, epoch)).permutation(n)
        epoch_losses: list[float] = []
        for b, start in enumerate(range(0, n, config.batch_size)):
            rows = order[start : start + config.batch_size]
            outputs, caches = _batch_forward(
                nets, data.train, rows, (config.seed, 4, epoch, b)
            )
            try:
                loss, grad, _ = dbb.batch_loss(
                    outputs,
                    targets[rows],
                    threshold=config.positive_threshold,
                    weights=weights,
                    dynamic=config.uses_dbb,
                    factor_positive_only=config.factor_positive_only,
                )
            except ValidationError as exc:
                raise ValidationError(f"epoch {epoch}, batch {b}: {exc}") from None
            if not np.isfinite(loss):
                raise ValidationError(f"epoch {epoch}, batch {b}: loss is {loss}")
            grads = _batch_backward(nets, caches, grad, config.video_dim)
            adam_step(params, grads, state)
            epoch_losses.append(loss)

        val_outputs = predict(nets, data.validation)
        val_report = compute_report(
            val_outputs,
            val_truth,
            data.class_names,
            threshold=config.threshold,
            include_zero_support=config.include_zero_support,
        )
        train_loss = float(np.mean(epoch_losses))
        log.append((epoch, train_loss, val_report.macro_f1))
        if val_report.macro_f1 > best_val:
            best_val = val_report.macro_f1
            best_epoch = epoch
            best_params = [p.copy() for p in params]

    if best_params is not None:
        for p, saved in zip(params, best_params):
            p[...] = saved
    return TrainResult(nets, log, best_epoch, best_val, weights)


def evaluate(
    nets: dict[str, DenseNet],
    subset: Subset,
    config: ExperimentConfig,
    class_names: tuple[str, ...],
    split: str = "",
    tag: str = "",
) -> MetricsReport:
    """Score one subset against its binary labels; deterministic."""
    outputs = predict(nets, subset)
    truth = subset.clips.binary_matrix().astype(bool)
    return compute_report(
        outputs,
        truth,
        class_names,
        threshold=config.threshold,
        split=split,
        tag=tag,
        include_zero_support=config.include_zero_support,
    )


# ----------------------------------------------------------- manifests

def _data_hash(subset: Subset) -> str:
    digest = hashlib.sha256()
    digest.update(subset.clips.binary_matrix().tobytes())
    for block in (subset.video, subset.audio):
        digest.update(b"|")
        if block is not None:
            digest.update(np.ascontiguousarray(block).tobytes())
    return digest.hexdigest()[:16]


def build_manifest(config: ExperimentConfig, data: ExperimentData) -> dict[str, str]:
    """Complete run description.

    Arms are recorded only through their three switches (balancing,
    smoothing, bimodal input), so manifests of adjacent arms differ in
    exactly one field.  No timestamps: identical runs produce identical
    manifests.
    """
    entries = {
        "dynamic_batch_balance": config.uses_dbb,
        "temporal_smoothing": config.uses_smoothing,
        "bimodal": config.bimodal,
        "class_mode": config.class_mode,
        "classes": ",".join(data.class_names),
        "split": config.split,
        "held_out": config.held_out or "-",
        "ratios": "/".join(format(r, "g") for r in config.ratios),
        "val_fraction": config.val_fraction,
        "batch_size": config.batch_size,
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "weight_decay": config.weight_decay,
        "weight_decay_mode": "decoupled",
        "criterion": "mse_mean_per_set",
        "dropout": config.dropout,
        "threshold": config.threshold,
        "positive_threshold": config.positive_threshold,
        "seed": config.seed,
        "hidden_dims": "x".join(map(str, config.hidden_dims)),
        "encoder_hidden_dims": "x".join(map(str, config.encoder_hidden_dims)),
        "encoder_output_dim": config.encoder_output_dim,
        "video_dim": config.video_dim,
        "audio_dim": config.audio_dim,
        "use_class_weights": config.use_class_weights,
        "factor_positive_only": config.factor_positive_only,
        "include_zero_support": config.include_zero_support,
        "train_hash": _data_hash(data.train),
        "validation_hash": _data_hash(data.validation),
        "test_hash": _data_hash(data.test),
    }
    return {key: str(value) for key, value in entries.items()}


def manifest_text(manifest: dict[str, str]) -> str:
    return "\n".join(f"{k} = {manifest[k]}" for k in sorted(manifest)) + "\n"


def config_hash(manifest: dict[str, str]) -> str:
    return hashlib.sha256(manifest_text(manifest).encode()).hexdigest()[:16]


# ------------------------------------------------------------ protocol

@dataclass
class CellResult:
    name: str
    status: str  # "trained" | "cached" | "failed"
    directory: Path
    test_macro_f1: float | None = None
    error: str | None = None


def cell_name(config: ExperimentConfig) -> str:
    split = config.split if not config.held_out else f"loo_{config.held_out}"
    return f"{config.arm}__{config.class_mode}__{split}"


def write_training_log(log, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_macro_f1"])
        for epoch, loss, val in log:
            writer.writerow([epoch, format(loss, ".10g"), format(val, ".6f")])


def run_cell(config: ExperimentConfig, data: ExperimentData, out_dir: Path,
             force: bool = False) -> CellResult:
    """Train/evaluate one protocol cell into its own directory.

    A cell whose manifest hash already produced a result is reused
    unless forced. Failures are contained: the error is recorded and
    re-raised only by the caller's policy.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest(config, data)
    digest = config_hash(manifest)
    stamp = out_dir / "result.json"
    if stamp.exists() and not force:
        previous = json.loads(stamp.read_text())
        if previous.get("config_hash") == digest:
            return CellResult(
                cell_name(config), "cached", out_dir, previous.get("test_macro_f1")
            )

    result = train(config, data)
    (out_dir / "manifest.txt").write_text(manifest_text(manifest), encoding="utf-8")
    write_training_log(result.log, out_dir / "training_log.csv")
    for name, net in result.nets.items():
        save_checkpoint(
            net,
            out_dir / f"{name}.mgw1",
            {"seed": config.seed, "config_hash": digest, "best_epoch": result.best_epoch},
        )
    reports = {}
    for split_name, subset in data.subsets().items():
        report = evaluate(nets=result.nets, subset=subset, config=config,
                          class_names=data.class_names, split=split_name,
                          tag=cell_name(config))
        write_report_csv(report, out_dir / f"report_{split_name}.csv")
        reports[split_name] = report
    write_comparison_csv(
        reports["train"], reports["test"], out_dir / "report_train_vs_test.csv"
    )
    stamp.write_text(
        json.dumps(
            {
                "config_hash": digest,
                "best_epoch": result.best_epoch,
                "best_val_macro_f1": result.best_val_f1,
                "test_macro_f1": reports["test"].macro_f1,
            },
            indent=1,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return CellResult(cell_name(config), "trained", out_dir, reports["test"].macro_f1)


def run_protocol(
    cells: list[tuple[ExperimentConfig, ExperimentData]],
    out_dir: str | Path,
    force: bool = False,
) -> list[CellResult]:
    """Run every cell, isolating failures to the cell that raised."""
    out_dir = Path(out_dir)
    results: list[CellResult] = []
    for config, data in cells:
        directory = out_dir / cell_name(config)
        try:
            results.append(run_cell(config, data, directory, force))
        except GestureLabError as exc:
            results.append(
                CellResult(cell_name(config), "failed", directory, error=str(exc))
            )
    return results


def load_cell_nets(directory: str | Path) -> dict[str, DenseNet]:
    """Reload the networks a finished cell saved."""
    directory = Path(directory)
    nets: dict[str, DenseNet] = {}
    for path in sorted(directory.glob("*.mgw1")):
        net, _ = load_checkpoint(path)
        nets[path.stem] = net
    if not nets:
        raise ConfigError(f"{directory} holds no checkpoints")
    return nets
