"""Gesture class vocabularies and the fine-to-super-class mapping.

The default inventory covers 17 annotatable gesture classes plus the
derived "Normal play" class (active exactly when nothing is annotated),
and groups them into 7 super-classes.  Both the vocabulary and the map
can be overridden from plain-text config files so the toolkit is not
tied to this particular inventory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, VocabularyError

NORMAL_PLAY = "Normal play"

# Annotatable fine classes, in canonical order.  NORMAL_PLAY is derived,
# never annotated, and is appended as the final fine class.
ANNOTATED_CLASSES: tuple[str, ...] = (
    "Facial expression",
    "Nodding",
    "Right hand round",
    "Expressive shoulder movement",
    "Left hand gesture",
    "Lifting head",
    "Minimal movement",
    "Eyes closed",
    "Vibrato",
    "Expressive preparation",
    "Freeze",
    "Expressive head movement",
    "Frowning",
    "Physical energy",
    "Upbeat in head movement",
    "Repositioning guitar",
    "Sympathetic body movement",
)

FINE_CLASSES: tuple[str, ...] = ANNOTATED_CLASSES + (NORMAL_PLAY,)

SUPER_CLASSES: tuple[str, ...] = (
    "Facial Expression",
    "Head related action",
    "Right Hand action",
    "Left hand action",
    "Relative stillness",
    "Upper body movement",
    "Normal play",
)

# Fine classes that belong to no movement group fold into "Normal play"
# alongside the derived class itself.
_DEFAULT_MAPPING: dict[str, str] = {
    "Facial expression": "Facial Expression",
    "Eyes closed": "Facial Expression",
    "Frowning": "Facial Expression",
    "Nodding": "Head related action",
    "Lifting head": "Head related action",
    "Expressive head movement": "Head related action",
    "Upbeat in head movement": "Head related action",
    "Right hand round": "Right Hand action",
    "Repositioning guitar": "Right Hand action",
    "Left hand gesture": "Left hand action",
    "Vibrato": "Left hand action",
    "Minimal movement": "Relative stillness",
    "Freeze": "Relative stillness",
    "Expressive shoulder movement": "Upper body movement",
    "Sympathetic body movement": "Upper body movement",
    "Expressive preparation": "Normal play",
    "Physical energy": "Normal play",
    NORMAL_PLAY: "Normal play",
}

RESIDUAL_CLASSES: tuple[str, ...] = ("Expressive preparation", "Physical energy")


def normalize_label(label: str) -> str:
    """Fold case and collapse whitespace so annotation spellings match."""
    return re.sub(r"\s+", " ", label.strip()).casefold()


@dataclass
class SuperClassMap:
    """Total mapping from fine class names to super-class names."""

    mapping: dict[str, str]
    super_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.super_names:
            seen: list[str] = []
            for super_name in self.mapping.values():
                if super_name not in seen:
                    seen.append(super_name)
            self.super_names = tuple(seen)
        self._by_norm = {normalize_label(fine): super_ for fine, super_ in self.mapping.items()}

    def super_of(self, fine: str) -> str:
        try:
            return self._by_norm[normalize_label(fine)]
        except KeyError:
            raise VocabularyError(
                f"fine class {fine!r} has no super-class mapping; "
                f"mapped classes: {sorted(self.mapping)}"
            ) from None

    def members(self, super_name: str) -> list[str]:
        return [fine for fine, s in self.mapping.items() if s == super_name]


DEFAULT_SUPER_CLASS_MAP = SuperClassMap(dict(_DEFAULT_MAPPING), SUPER_CLASSES)


def load_vocabulary(path: str | Path) -> tuple[str, ...]:
    """Read a class vocabulary: one class name per line, '#' comments."""
    names: list[str] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            names.append(line)
    if not names:
        raise ConfigError(f"vocabulary file {path} lists no classes")
    norms = [normalize_label(n) for n in names]
    if len(set(norms)) != len(norms):
        raise ConfigError(f"vocabulary file {path} has duplicate class names")
    return tuple(names)


def load_super_class_map(path: str | Path) -> SuperClassMap:
    """Read a fine-to-super map: ``Fine class = Super class`` per line."""
    mapping: dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected 'fine class = super class', got {line!r}")
        fine, super_ = (part.strip() for part in line.split("=", 1))
        if not fine or not super_:
            raise ConfigError(f"{path}:{i}: empty class name")
        if fine in mapping:
            raise ConfigError(f"{path}:{i}: duplicate mapping for {fine!r}")
        mapping[fine] = super_
    if not mapping:
        raise ConfigError(f"super-class map {path} is empty")
    return SuperClassMap(mapping)


def write_default_super_class_map(path: str | Path) -> None:
    lines = [f"{fine} = {super_}" for fine, super_ in _DEFAULT_MAPPING.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
