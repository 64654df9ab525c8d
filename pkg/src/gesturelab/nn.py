"""Dense feedforward networks with exact gradients, trained by Adam.

Everything a small multi-label experiment needs and nothing more:
ReLU/sigmoid/identity layers, inverted dropout, element-wise MSE,
bias-corrected Adam with decoupled weight decay, and a versioned binary
checkpoint format.  Gradients are hand-derived and covered by
finite-difference checks in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError, ValidationError

ACTIVATIONS = ("relu", "sigmoid", "identity")

# Architecture defaults; hidden widths are configurable and recorded in
# experiment manifests.
ENCODER_INPUT_DIM = 3024
ENCODER_HIDDEN_DIMS = (1024, 512, 512)
ENCODER_OUTPUT_DIM = 400
CLASSIFIER_HIDDEN_DIMS = (256, 128, 64)
FUSION_INPUT_DIM = 2 * ENCODER_OUTPUT_DIM
DEFAULT_DROPOUT = 0.3


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"layer weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )


@dataclass
class DenseNet:
    layers: list[Layer]
    kind: str = "custom"

    def __post_init__(self):
        for i in range(len(self.layers) - 1):
            out_dim = self.layers[i].weight.shape[0]
            in_next = self.layers[i + 1].weight.shape[1]
            if out_dim != in_next:
                raise ShapeError(
                    f"layer {i} outputs {out_dim} features but layer {i + 1} "
                    f"expects {in_next}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        """Flat view of all weights and biases, layer by layer."""
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.extend((layer.weight, layer.bias))
        return params


@dataclass
class ForwardCache:
    """Intermediate state of one train-mode forward pass.

    Valid for exactly one backward() on the same network; parameter
    updates invalidate it.
    """

    net: DenseNet
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]  # post-activation, pre-dropout
    dropout_masks: list[np.ndarray | None]
    outputs: np.ndarray
    consumed: bool = False


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        # Split by sign for numerical stability on large |z|.
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activation_gradient(z: np.ndarray, activated: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0).astype(float)
    if activation == "sigmoid":
        return activated * (1.0 - activated)
    return np.ones_like(z)


def _check_input(net: DenseNet, inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"inputs must be (batch, features), got shape {x.shape}")
    if x.shape[1] != net.input_dim:
        raise ShapeError(
            f"inputs have {x.shape[1]} features but layer 0 expects {net.input_dim}"
        )
    return x


def forward(net: DenseNet, inputs: np.ndarray) -> np.ndarray:
    """Deterministic inference pass; dropout is skipped."""
    x = _check_input(net, inputs)
    for layer in net.layers:
        x = _activate(x @ layer.weight.T + layer.bias, layer.activation)
    return x


def forward_train(net: DenseNet, inputs: np.ndarray, seed: int) -> ForwardCache:
    """Forward pass with dropout and cached intermediates for backward().

    Dropout masks are drawn from ``seed``, so a fixed seed reproduces the
    pass exactly.  Inverted scaling keeps eval-mode expectations unbiased.
    """
    x = _check_input(net, inputs)
    rng = np.random.default_rng(seed)
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []
    out = x
    for layer in net.layers:
        z = out @ layer.weight.T + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        post.append(a)
        if layer.dropout > 0.0:
            mask = (rng.random(a.shape) >= layer.dropout) / (1.0 - layer.dropout)
            out = a * mask
        else:
            mask = None
            out = a
        masks.append(mask)
    return ForwardCache(net, x, pre, post, masks, out)


def backward(
    net: DenseNet, cache: ForwardCache, output_gradient: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact gradients for every parameter plus the input gradient.

    Returns (parameter gradients ordered like net.parameters(), dLoss/dinputs).
    """
    if cache.net is not net:
        raise ValidationError("cache was produced by a different network")
    if cache.consumed:
        raise ValidationError("stale cache: backward() already consumed this pass")
    cache.consumed = True
    grad = np.asarray(output_gradient, dtype=float)
    if grad.shape != cache.outputs.shape:
        raise ShapeError(
            f"output gradient shape {grad.shape} does not match outputs "
            f"{cache.outputs.shape}"
        )
    param_grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.layers))
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        if cache.dropout_masks[i] is not None:
            grad = grad * cache.dropout_masks[i]
        grad = grad * _activation_gradient(
            cache.pre_activations[i], cache.activations[i], layer.activation
        )
        below = cache.inputs if i == 0 else _dropped(cache, i - 1)
        param_grads[2 * i] = grad.T @ below
        param_grads[2 * i + 1] = grad.sum(axis=0)
        grad = grad @ layer.weight
    return param_grads, grad


def _dropped(cache: ForwardCache, i: int) -> np.ndarray:
    a = cache.activations[i]
    mask = cache.dropout_masks[i]
    return a if mask is None else a * mask


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of element-wise squared differences and its gradient."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ValidationError("MSE of an empty set is undefined")
    diff = pred - target
    return float((diff**2).mean()), 2.0 * diff / diff.size


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(
        cls,
        params: list[np.ndarray],
        learning_rate: float = 0.001,
        weight_decay: float = 0.0,
    ) -> AdamState:
        return cls(
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update with decoupled weight decay.

    Decay is applied directly to the parameters (scaled by the learning
    rate) before the bias-corrected moment update.
    """
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ShapeError(
            f"{len(params)} params vs {len(grads)} grads vs {len(state.m)} accumulators"
        )
    for i, g in enumerate(grads):
        if not np.isfinite(g).all():
            raise ValidationError(
                f"non-finite gradient for parameter {i} (shape {g.shape}); "
                "aborting update"
            )
    state.step += 1
    t = state.step
    lr, b1, b2 = state.learning_rate, state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g**2
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def _init_layer(
    rng: np.random.Generator, in_dim: int, out_dim: int, activation: str, dropout: float
) -> Layer:
    # Uniform fan-in scaling suited to ReLU stacks; biases start at zero.
    bound = np.sqrt(6.0 / in_dim)
    weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    return Layer(weight, np.zeros(out_dim), activation, dropout)


def build_architecture(
    kind: str,
    n_classes: int | None = None,
    input_dim: int | None = None,
    hidden_dims: tuple[int, ...] | None = None,
    output_dim: int | None = None,
    dropout: float = DEFAULT_DROPOUT,
    seed: int = 0,
) -> DenseNet:
    """Construct one of the three standard network shapes.

    audio_encoder: input (3024 by default) -> ReLU hidden stack -> linear
    projection to 400, dropout throughout.  classifier: 400 -> ReLU
    hidden stack -> per-class sigmoid outputs.  fusion_classifier: the
    same but reading the 800-wide concatenation of two representations.
    """
    rng = np.random.default_rng(seed)
    if kind == "audio_encoder":
        in_dim = ENCODER_INPUT_DIM if input_dim is None else input_dim
        hidden = ENCODER_HIDDEN_DIMS if hidden_dims is None else tuple(hidden_dims)
        out_dim = ENCODER_OUTPUT_DIM if output_dim is None else output_dim
        final_activation = "identity"
        final_dropout = dropout
    elif kind in ("classifier", "fusion_classifier"):
        if n_classes is None or n_classes < 1:
            raise ValidationError(f"{kind} needs a positive class count, got {n_classes}")
        default_in = FUSION_INPUT_DIM if kind == "fusion_classifier" else ENCODER_OUTPUT_DIM
        in_dim = default_in if input_dim is None else input_dim
        hidden = CLASSIFIER_HIDDEN_DIMS if hidden_dims is None else tuple(hidden_dims)
        out_dim = n_classes
        final_activation = "sigmoid"
        final_dropout = 0.0
    else:
        raise ValidationError(
            f"unknown architecture kind {kind!r}; choose audio_encoder, "
            "classifier, or fusion_classifier"
        )
    dims = [in_dim, *hidden, out_dim]
    if any(d < 1 for d in dims):
        raise ValidationError(f"layer widths must be positive, got {dims}")
    layers = [
        _init_layer(rng, dims[i], dims[i + 1], "relu", dropout)
        for i in range(len(dims) - 2)
    ]
    layers.append(_init_layer(rng, dims[-2], dims[-1], final_activation, final_dropout))
    return DenseNet(layers, kind=kind)


# ------------------------------------------------------------ checkpoints

CHECKPOINT_MAGIC = b"MGW1"
CHECKPOINT_VERSION = 1
_ACTIVATION_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}


def save_checkpoint(net: DenseNet, path: str | Path, manifest: dict | None = None) -> None:
    """Write the network to ``path`` plus a key=value manifest sidecar."""
    path = Path(path)
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(net.layers)),
    ]
    for layer in net.layers:
        parts.append(
            struct.pack(
                "<IIBd",
                layer.weight.shape[1],
                layer.weight.shape[0],
                _ACTIVATION_TAGS[layer.activation],
                layer.dropout,
            )
        )
    for layer in net.layers:
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))

    entries = {"kind": net.kind}
    entries.update(manifest or {})
    lines = [f"{k} = {entries[k]}" for k in sorted(entries)]
    manifest_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def manifest_path(checkpoint: str | Path) -> Path:
    return Path(checkpoint).with_name(Path(checkpoint).name + ".manifest")


def load_manifest(checkpoint: str | Path) -> dict[str, str]:
    side = manifest_path(checkpoint)
    entries: dict[str, str] = {}
    if side.exists():
        for line in side.read_text(encoding="utf-8").splitlines():
            if "=" in line:
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
    return entries


def load_checkpoint(path: str | Path) -> tuple[DenseNet, dict[str, str]]:
    """Read a network and its manifest back; rejects malformed files."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a {CHECKPOINT_MAGIC.decode()} checkpoint")
    version, layer_count = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if layer_count < 1 or layer_count > 1024:
        raise FormatError(f"{path}: implausible layer count {layer_count}")
    offset = 12
    header_size = struct.calcsize("<IIBd")
    dims: list[tuple[int, int, int, float]] = []
    if len(blob) < offset + layer_count * header_size:
        raise FormatError(f"{path}: truncated layer table")
    tags = {v: k for k, v in _ACTIVATION_TAGS.items()}
    for _ in range(layer_count):
        in_dim, out_dim, tag, rate = struct.unpack_from("<IIBd", blob, offset)
        offset += header_size
        if tag not in tags:
            raise FormatError(f"{path}: unknown activation tag {tag}")
        if in_dim < 1 or out_dim < 1:
            raise FormatError(f"{path}: bad layer dims {in_dim}x{out_dim}")
        dims.append((in_dim, out_dim, tag, rate))
    expected = sum(8 * (i * o + o) for i, o, _, _ in dims)
    if len(blob) - offset != expected:
        raise FormatError(
            f"{path}: parameter block is {len(blob) - offset} bytes, expected {expected}"
        )
    layers: list[Layer] = []
    for in_dim, out_dim, tag, rate in dims:
        n = in_dim * out_dim
        weight = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(
            out_dim, in_dim
        )
        offset += 8 * n
        bias = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=offset)
        offset += 8 * out_dim
        layers.append(Layer(weight.copy(), bias.copy(), tags[tag], rate))
    manifest = load_manifest(path)
    return DenseNet(layers, kind=manifest.get("kind", "custom")), manifest
