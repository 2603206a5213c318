"""Pipeline configuration: one JSON document covering model, loss, training,
scene synthesis, and the manifest location.

Two profiles ship with the package: `paper` (the full-scale configuration)
and `desk` (a laptop-scale model and schedule for end-to-end runs).
Class weights may be the literal string "auto", in which case the training
command derives them from the training split's label statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, InputError
from .losses import LossConfig
from .model import ModelConfig
from .synth import SceneSpec
from .training import TrainConfig

PROFILES = ("desk", "paper")


@dataclass
class SceneSection:
    """SceneSpec template plus how many scenes to synthesize per split."""

    spec: SceneSpec
    scenes_per_split: dict = field(default_factory=lambda: {"train": 6, "val": 2, "test": 2})

    def __post_init__(self):
        for split, count in self.scenes_per_split.items():
            if split not in ("train", "val", "test") or int(count) < 0:
                raise ConfigError(f"bad scenes_per_split entry {split!r}: {count!r}")


@dataclass
class PipelineConfig:
    model: ModelConfig
    loss: LossConfig
    train: TrainConfig
    epochs_stage2: int
    scene: SceneSection
    manifest: Path | None
    auto_class_weights: bool
    seed: int

    @property
    def stage2_train(self) -> TrainConfig:
        return TrainConfig(
            lr=self.train.lr,
            weight_decay=self.train.weight_decay,
            batch_size=self.train.batch_size,
            epochs=self.epochs_stage2,
            seed=self.train.seed + 1,
        )


def _parse(doc: dict, base: Path | None) -> PipelineConfig:
    try:
        model = ModelConfig.from_dict(doc.get("model", {}))
        loss_doc = dict(doc.get("loss", {}))
        auto_weights = loss_doc.get("class_weights") == "auto"
        if auto_weights:
            loss_doc.pop("class_weights")
        loss = LossConfig.from_dict(loss_doc)

        train_doc = dict(doc.get("train", {}))
        epochs_stage2 = int(train_doc.pop("epochs_stage2", 2))
        train_doc.setdefault("epochs", train_doc.pop("epochs_stage1", 4))
        train = TrainConfig(**train_doc)

        scene_doc = dict(doc.get("scene", {}))
        scenes_per_split = scene_doc.pop("scenes_per_split",
                                         {"train": 6, "val": 2, "test": 2})
        scene = SceneSection(spec=SceneSpec.from_dict(scene_doc),
                             scenes_per_split=dict(scenes_per_split))
    except TypeError as e:
        raise ConfigError(f"bad configuration document: {e}") from e

    manifest = doc.get("manifest")
    if manifest is not None:
        manifest = Path(manifest)
        if base is not None and not manifest.is_absolute():
            manifest = base / manifest
    return PipelineConfig(
        model=model,
        loss=loss,
        train=train,
        epochs_stage2=epochs_stage2,
        scene=scene,
        manifest=manifest,
        auto_class_weights=auto_weights,
        seed=int(doc.get("seed", train.seed)),
    )


def load_config(path) -> PipelineConfig:
    """Load a configuration file; relative manifest paths resolve next to it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: unreadable config: {e}") from e
    return _parse(doc, path.parent)


def load_profile(name: str) -> PipelineConfig:
    """Load a shipped profile by name ('desk' or 'paper')."""
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; expected one of {PROFILES}")
    text = resources.files("csdkit").joinpath("profiles", f"{name}.json").read_text("utf-8")
    return _parse(json.loads(text), None)


def load_config_or_profile(value: str) -> PipelineConfig:
    """Interpret `value` as a profile name first, then as a file path."""
    if value in PROFILES:
        return load_profile(value)
    return load_config(value)
