"""Run configuration: flat ``section.key = value`` text files plus flag overrides.

The fully resolved configuration is persisted alongside every run output so a
run directory is self-describing and diff-able; re-running from the persisted
file reproduces the outputs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Tuple

from .model import BackboneKind, BackboneSpec
from .preprocessing import AugmentationConfig, NormalizationMethod, PreprocessConfig
from .training import EnsembleSpec, TrainingConfig


def parse_config_file(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'section.key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


class RunConfig:
    """Merged configuration: defaults, then config file, then flag overrides."""

    def __init__(self, values: Optional[Dict[str, str]] = None):
        self.values: Dict[str, str] = dict(values or {})

    @classmethod
    def load(cls, path: Optional[Path], overrides: Optional[Dict[str, str]] = None) -> "RunConfig":
        values = parse_config_file(path) if path else {}
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = str(value)
        return cls(values)

    def set_default(self, key: str, value: object) -> None:
        self.values.setdefault(key, str(value))

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values.get(key, default)

    def get_int(self, key: str, default: int) -> int:
        return int(self.values.get(key, default))

    def get_float(self, key: str, default: float) -> float:
        return float(self.values.get(key, default))

    def get_bool(self, key: str, default: bool) -> bool:
        raw = self.values.get(key)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected boolean, got {raw!r}")

    def get_pair(self, key: str, default: Tuple[float, float]) -> Tuple[float, float]:
        raw = self.values.get(key)
        if raw is None:
            return default
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{key}: expected 'lo,hi', got {raw!r}")
        return float(parts[0]), float(parts[1])

    def serialize(self) -> str:
        lines = [f"{key} = {self.values[key]}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def persist(self, out_dir: Path, name: str = "run_config.cfg") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / name
        path.write_text(self.serialize())
        return path

    # typed section builders -------------------------------------------------

    def augmentation_config(self) -> AugmentationConfig:
        return AugmentationConfig(
            horizontal_flip=self.get_bool("augment.horizontal_flip", True),
            vertical_flip=self.get_bool("augment.vertical_flip", True),
            brightness_delta=self.get_float("augment.brightness_delta", 0.1),
            contrast_range=self.get_pair("augment.contrast_range", (0.9, 1.1)),
            saturation_range=self.get_pair("augment.saturation_range", (0.9, 1.1)),
            hue_delta=self.get_float("augment.hue_delta", 0.02),
            rng_seed=self.get_int("augment.rng_seed", 0),
        )

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            target_size=self.get_int("preprocess.target_size", 299),
            localization_threshold_fraction=self.get_float(
                "preprocess.localization_threshold_fraction", 0.1
            ),
            interpolation=self.get("preprocess.interpolation", "bilinear"),
            augmentation=self.augmentation_config(),
        )

    def training_config(self, seed: Optional[int] = None, deterministic: bool = False) -> TrainingConfig:
        backbone = BackboneSpec(
            kind=BackboneKind(self.get("training.backbone", "small_cnn")),
            input_size=self.get_int("training.input_size", self.get_int("preprocess.target_size", 299)),
        )
        return TrainingConfig(
            learning_rate=self.get_float("training.learning_rate", 0.001),
            weight_decay=self.get_float("training.weight_decay", 4e-5),
            optimizer=self.get("training.optimizer", "rmsprop"),
            rmsprop_decay=self.get_float("training.rmsprop_decay", 0.9),
            rmsprop_epsilon=self.get_float("training.rmsprop_epsilon", 1.0),
            batch_size=self.get_int("training.batch_size", 32),
            max_epochs=self.get_int("training.max_epochs", 50),
            patience_epochs=self.get_int("training.patience_epochs", 10),
            min_auc_delta=self.get_float("training.min_auc_delta", 0.01),
            normalization=NormalizationMethod(
                self.get("training.normalization", "symmetric_range")
            ),
            backbone=backbone,
            pretrained_init=self.get_bool("training.pretrained_init", False),
            augmentation=self.augmentation_config(),
            seed=self.get_int("training.seed", 0) if seed is None else seed,
            deterministic=deterministic or self.get_bool("training.deterministic", False),
        )

    def ensemble_spec(self, base_seed: int = 0) -> EnsembleSpec:
        raw = self.get("ensemble.member_seeds")
        if raw:
            seeds = tuple(int(s.strip()) for s in raw.split(","))
        else:
            n = self.get_int("ensemble.n_members", 10)
            seeds = tuple(range(base_seed, base_seed + n))
        return EnsembleSpec(member_seeds=seeds)
