"""3D ResNet-34 backbone whose 400-wide head output is the clip feature.

The parameter layout (7x7x7 stem, basic blocks, parameter-free
zero-padding shortcuts) matches the widely published Kinetics-400
spatiotemporal ResNet checkpoints, so any such -34 state dict loads
directly.  Without a checkpoint the weights fall back to a seeded
deterministic initialization; either way the weight provenance and a
SHA-256 of the state dict are reported for the output sidecar.
"""

from __future__ import annotations

import hashlib
from functools import partial
from pathlib import Path

import torch
from torch import nn
from torch.nn import functional as F

from .errors import FormatError

FEATURE_DIM = 400  # the Kinetics-400 class count doubles as the feature width
RESNET34_LAYERS = (3, 4, 6, 3)


def _shortcut_pad(x: torch.Tensor, planes: int, stride: int) -> torch.Tensor:
    """Parameter-free downsample: strided average pool plus zero channels."""
    out = F.avg_pool3d(x, kernel_size=1, stride=stride)
    pad = out.new_zeros(out.shape[0], planes - out.shape[1], *out.shape[2:])
    return torch.cat([out, pad], dim=1)


class BasicBlock(nn.Module):
    def __init__(self, in_planes: int, planes: int, stride: int = 1, downsample=None):
        super().__init__()
        self.conv1 = nn.Conv3d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(planes)
        self.conv2 = nn.Conv3d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(planes)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        residual = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + residual)


class ResNet3d(nn.Module):
    """Stacked 3-D residual blocks over a 3 x 16 x 112 x 112 clip window."""

    def __init__(self, layers: tuple[int, ...] = RESNET34_LAYERS, n_outputs: int = FEATURE_DIM):
        super().__init__()
        self.in_planes = 64
        self.conv1 = nn.Conv3d(3, 64, kernel_size=7, stride=(1, 2, 2), padding=3, bias=False)
        self.bn1 = nn.BatchNorm3d(64)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool3d(kernel_size=3, stride=2, padding=1)
        self.layer1 = self._stack(64, layers[0], stride=1)
        self.layer2 = self._stack(128, layers[1], stride=2)
        self.layer3 = self._stack(256, layers[2], stride=2)
        self.layer4 = self._stack(512, layers[3], stride=2)
        self.avgpool = nn.AdaptiveAvgPool3d(1)
        self.fc = nn.Linear(512, n_outputs)

    def _stack(self, planes: int, blocks: int, stride: int) -> nn.Sequential:
        downsample = None
        if stride != 1 or self.in_planes != planes:
            downsample = partial(_shortcut_pad, planes=planes, stride=stride)
        stacked = [BasicBlock(self.in_planes, planes, stride, downsample)]
        self.in_planes = planes
        stacked += [BasicBlock(planes, planes) for _ in range(1, blocks)]
        return nn.Sequential(*stacked)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self.layer4(self.layer3(self.layer2(self.layer1(x))))
        return self.fc(self.avgpool(x).flatten(1))


def state_dict_sha256(state: dict) -> str:
    """Order-independent fingerprint of every parameter and buffer."""
    digest = hashlib.sha256()
    for key in sorted(state):
        tensor = state[key].detach().cpu().contiguous()
        digest.update(key.encode("utf-8"))
        digest.update(str(tuple(tensor.shape)).encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()


def _load_state_dict(path: str | Path) -> dict:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch surfaces many unrelated error types
        raise FormatError(f"{path}: not a readable checkpoint ({exc})") from None
    if isinstance(blob, dict) and "state_dict" in blob:
        blob = blob["state_dict"]
    if not isinstance(blob, dict):
        raise FormatError(f"{path}: checkpoint holds no state dict")
    # published checkpoints often carry a DataParallel "module." prefix
    return {k.removeprefix("module."): v for k, v in blob.items()}


def build_backbone(
    weights: str | Path | None = None, seed: int = 0
) -> tuple[ResNet3d, dict[str, str]]:
    """Frozen eval-mode backbone plus its weight provenance.

    ``weights`` points at a published Kinetics-400 3D ResNet-34 state
    dict; ``seed`` controls the fallback initialization used without one.
    """
    torch.manual_seed(seed)
    model = ResNet3d()
    if weights is None:
        source = f"seeded-init:{seed}"
    else:
        state = _load_state_dict(weights)
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise FormatError(
                f"{weights}: checkpoint does not match the 3D ResNet-34 layout ({exc})"
            ) from None
        source = f"checkpoint:{Path(weights).name}"
    model.eval()
    model.requires_grad_(False)
    provenance = {
        "weights_source": source,
        "weights_sha256": state_dict_sha256(model.state_dict()),
    }
    return model, provenance
