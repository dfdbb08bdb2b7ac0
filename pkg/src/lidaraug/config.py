"""Augmentation configuration, loadable from YAML or JSON."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .placement import DEFAULT_HEIGHT_RANGES, PlacementConfig

# the eight instance classes shared by SemanticKITTI, NuScenes and KITTI
DEFAULT_CLASSES = (
    "car", "person", "bicycle", "bicyclist", "motorcycle", "motorcyclist", "truck", "bus",
)
MODES = ("segmentation", "detection")


@dataclass
class AugmentationConfig:
    n: int = 5
    classes: list[str] = field(default_factory=lambda: list(DEFAULT_CLASSES))
    p_drop: float = 0.1
    w_noise: float = 0.6
    sigma: float = 0.03
    r_min: float = 3.0
    r_max: float = 40.0
    height_ranges: dict = field(default_factory=lambda: dict(DEFAULT_HEIGHT_RANGES))
    sensor: object = "hdl64-like"
    remission_table: str | None = None
    manifest: str | None = None
    top_k: int | None = None
    seed: int = 0
    mode: str = "segmentation"
    margin: float = 0.2
    ground_clearance: float = 0.3
    expansion_step: float = 0.5
    max_expansions: int = 5
    max_attempts: int = 10
    workers: int | None = None

    def __post_init__(self):
        self.height_ranges = {k: tuple(v) for k, v in self.height_ranges.items()}
        self.classes = list(self.classes)
        self.validate()

    def validate(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")
        for name in ("p_drop", "w_noise"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.n > 0 and not self.classes:
            raise ValueError("classes must be non-empty when n > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        missing = [c for c in self.classes if c not in self.height_ranges]
        if missing:
            raise ValueError(f"no height range for classes {missing}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def placement_config(self) -> PlacementConfig:
        return PlacementConfig(
            height_ranges=dict(self.height_ranges),
            r_min=self.r_min,
            r_max=self.r_max,
            margin=self.margin,
            ground_clearance=self.ground_clearance,
            expansion_step=self.expansion_step,
            max_expansions=self.max_expansions,
            max_attempts=self.max_attempts,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["height_ranges"] = {k: list(v) for k, v in self.height_ranges.items()}
        return d

    @classmethod
    def from_dict(cls, doc) -> "AugmentationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "AugmentationConfig":
        """Read a YAML/JSON config; relative paths resolve against its directory."""
        path = Path(path)
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: config must be a mapping")
        for key in ("remission_table", "manifest"):
            if doc.get(key) is not None and not Path(doc[key]).is_absolute():
                doc[key] = str(path.parent / doc[key])
        return cls.from_dict(doc)
