"""Training loop with RMSProp, AUC-based early stopping, and ensembling.

Each epoch runs mini-batch optimization over the train split, then records
the train-set Brier score and the validation AUC (computed with the same
200-threshold procedure as final evaluation). Training stops once the
validation AUC has not beaten the running best by the minimum delta for
`patience_epochs` epochs, and the checkpoint returned is the one from the
best epoch, not the last.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from .dataset import DatasetManifest, ManifestEntry, Split
from .evaluation import DEFAULT_N_THRESHOLDS, auc, roc_curve_arrays
from .model import BackboneKind, BackboneSpec, build_backbone
from .preprocessing import (
    AugmentationConfig,
    NormalizationMethod,
    augment,
    load_rgb,
    normalize,
)
from .types import PredictionRecord, RdrLabel

TRAINING_LOG_NAME = "training_log.csv"
CHECKPOINT_FORMAT_VERSION = 1


class DataUnavailable(FileNotFoundError):
    """A preprocessed image required for training is missing."""


class NonFiniteLoss(RuntimeError):
    """Training diverged; carries the epoch where loss became non-finite."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


class EnsembleMemberFailed(RuntimeError):
    def __init__(self, member_index: int, cause: BaseException):
        self.member_index = member_index
        super().__init__(f"ensemble member {member_index} failed: {cause}")


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.001
    weight_decay: float = 4e-5
    optimizer: str = "rmsprop"
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1.0
    batch_size: int = 32
    max_epochs: int = 50
    patience_epochs: int = 10
    min_auc_delta: float = 0.01
    normalization: NormalizationMethod = NormalizationMethod.SYMMETRIC_RANGE
    backbone: BackboneSpec = BackboneSpec()
    pretrained_init: bool = False
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")
        if self.min_auc_delta < 0:
            raise ValueError("min_auc_delta must be >= 0")
        if self.optimizer != "rmsprop":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass(frozen=True)
class EnsembleSpec:
    member_seeds: Tuple[int, ...] = tuple(range(10))

    def __post_init__(self) -> None:
        if len(set(self.member_seeds)) != len(self.member_seeds):
            raise ValueError("member seeds must be distinct")
        if not self.member_seeds:
            raise ValueError("ensemble needs at least one member")

    @property
    def n_members(self) -> int:
        return len(self.member_seeds)


@dataclass
class TrainingRunState:
    epoch: int = 0
    best_auc: float = float("-inf")
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    history: List[Tuple[int, float, float]] = field(default_factory=list)
    checkpoints: Dict[int, str] = field(default_factory=dict)


def early_stop_decision(
    state: TrainingRunState, new_auc: float, config: TrainingConfig
) -> Tuple[bool, TrainingRunState]:
    """Apply the peak-AUC rule; returns (stop, updated state).

    An epoch improves iff its AUC beats the running best by at least
    min_auc_delta; improvement resets the patience counter, otherwise the
    counter increments and training stops once it reaches patience_epochs.
    """
    if not 0.0 <= new_auc <= 1.0:
        raise ValueError(f"AUC {new_auc} outside [0, 1]")
    epoch = state.epoch + 1
    if new_auc >= state.best_auc + config.min_auc_delta:
        updated = replace(
            state,
            epoch=epoch,
            best_auc=new_auc,
            best_epoch=epoch,
            epochs_since_improvement=0,
        )
        return False, updated
    counter = epoch - state.best_epoch
    updated = replace(state, epoch=epoch, epochs_since_improvement=counter)
    return counter >= config.patience_epochs, updated


class EmptyInput(ValueError):
    pass


def brier_score(
    predictions: Sequence[PredictionRecord], labels: Mapping[str, RdrLabel]
) -> float:
    """Mean squared difference between scores and binary labels, in [0, 1]."""
    if not predictions:
        raise EmptyInput("no predictions")
    total = 0.0
    for p in predictions:
        total += (p.score - labels[p.image_id].as_int()) ** 2
    return total / len(predictions)


def _brier_arrays(scores: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((scores - y) ** 2))


def _preprocessed_path(preprocessed_dir: Path, image_id: str) -> Path:
    path = preprocessed_dir / f"{image_id}.png"
    if not path.exists():
        raise DataUnavailable(str(path))
    return path


def _load_batch(
    entries: Sequence[ManifestEntry],
    preprocessed_dir: Path,
    method: NormalizationMethod,
    aug_config: Optional[AugmentationConfig],
    rng: Optional[np.random.Generator],
) -> Tuple[torch.Tensor, torch.Tensor]:
    images = []
    targets = []
    for e in entries:
        arr = load_rgb(_preprocessed_path(preprocessed_dir, e.image_id))
        tensor = normalize(arr, method)
        if aug_config is not None and rng is not None:
            tensor = augment(tensor, aug_config, rng, method)
        images.append(tensor)
        targets.append(float(e.grade_record.rdr.referable))
    x = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous()
    return x, torch.tensor(targets, dtype=torch.float32)


def predict_scores(
    model: nn.Module,
    entries: Sequence[ManifestEntry],
    preprocessed_dir: Path,
    method: NormalizationMethod,
    batch_size: int = 32,
    model_id: str = "model",
) -> List[PredictionRecord]:
    """Deterministic inference pass: sorted order, no augmentation, eval mode."""
    ordered = sorted(entries, key=lambda e: e.image_id)
    model.eval()
    records: List[PredictionRecord] = []
    with torch.no_grad():
        for start in range(0, len(ordered), batch_size):
            chunk = ordered[start : start + batch_size]
            x, _ = _load_batch(chunk, preprocessed_dir, method, None, None)
            scores = torch.sigmoid(model(x)).numpy()
            for e, s in zip(chunk, scores):
                records.append(
                    PredictionRecord(image_id=e.image_id, score=float(s), model_id=model_id)
                )
    return records


def _validation_auc(
    model: nn.Module,
    entries: Sequence[ManifestEntry],
    preprocessed_dir: Path,
    config: TrainingConfig,
) -> float:
    records = predict_scores(
        model, entries, preprocessed_dir, config.normalization, config.batch_size
    )
    scores = np.array([r.score for r in records])
    labels = {e.image_id: e.grade_record.rdr for e in entries}
    y = np.array([labels[r.image_id].as_int() for r in records])
    return auc(roc_curve_arrays(scores, y, DEFAULT_N_THRESHOLDS))


def save_checkpoint(
    path: Path,
    model: nn.Module,
    config: TrainingConfig,
    best_auc: float,
    best_epoch: int,
) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "backbone_kind": config.backbone.kind.value,
            "input_size": config.backbone.input_size,
            "state_dict": model.state_dict(),
            "config": training_config_to_dict(config),
            "best_auc": best_auc,
            "best_epoch": best_epoch,
        },
        path,
    )


def load_checkpoint(path: Path) -> Tuple[nn.Module, TrainingConfig, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    config = training_config_from_dict(payload["config"])
    model = build_backbone(config.backbone, pretrained_init=False)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, payload


def training_config_to_dict(config: TrainingConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "weight_decay": config.weight_decay,
        "optimizer": config.optimizer,
        "rmsprop_decay": config.rmsprop_decay,
        "rmsprop_epsilon": config.rmsprop_epsilon,
        "batch_size": config.batch_size,
        "max_epochs": config.max_epochs,
        "patience_epochs": config.patience_epochs,
        "min_auc_delta": config.min_auc_delta,
        "normalization": config.normalization.value,
        "backbone_kind": config.backbone.kind.value,
        "input_size": config.backbone.input_size,
        "pretrained_init": config.pretrained_init,
        "augmentation": {
            "horizontal_flip": config.augmentation.horizontal_flip,
            "vertical_flip": config.augmentation.vertical_flip,
            "brightness_delta": config.augmentation.brightness_delta,
            "contrast_range": list(config.augmentation.contrast_range),
            "saturation_range": list(config.augmentation.saturation_range),
            "hue_delta": config.augmentation.hue_delta,
            "rng_seed": config.augmentation.rng_seed,
        },
        "seed": config.seed,
        "deterministic": config.deterministic,
    }


def training_config_from_dict(data: dict) -> TrainingConfig:
    aug = data["augmentation"]
    return TrainingConfig(
        learning_rate=data["learning_rate"],
        weight_decay=data["weight_decay"],
        optimizer=data["optimizer"],
        rmsprop_decay=data["rmsprop_decay"],
        rmsprop_epsilon=data["rmsprop_epsilon"],
        batch_size=data["batch_size"],
        max_epochs=data["max_epochs"],
        patience_epochs=data["patience_epochs"],
        min_auc_delta=data["min_auc_delta"],
        normalization=NormalizationMethod(data["normalization"]),
        backbone=BackboneSpec(
            kind=BackboneKind(data["backbone_kind"]), input_size=data["input_size"]
        ),
        pretrained_init=data["pretrained_init"],
        augmentation=AugmentationConfig(
            horizontal_flip=aug["horizontal_flip"],
            vertical_flip=aug["vertical_flip"],
            brightness_delta=aug["brightness_delta"],
            contrast_range=tuple(aug["contrast_range"]),
            saturation_range=tuple(aug["saturation_range"]),
            hue_delta=aug["hue_delta"],
            rng_seed=aug["rng_seed"],
        ),
        seed=data["seed"],
        deterministic=data.get("deterministic", False),
    )


_DEFAULT_TORCH_THREADS = torch.get_num_threads()


def _seed_torch(config: TrainingConfig) -> None:
    torch.manual_seed(config.seed)
    if config.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    else:
        torch.set_num_threads(_DEFAULT_TORCH_THREADS)
        torch.use_deterministic_algorithms(False)


def train_one(
    manifest: DatasetManifest,
    config: TrainingConfig,
    preprocessed_dir: Path,
    run_dir: Path,
) -> Tuple[Path, TrainingRunState]:
    """Train a single model; returns (best-epoch checkpoint path, run state)."""
    train_entries = manifest.split_entries(Split.TRAIN)
    val_entries = manifest.split_entries(Split.VALIDATION)
    if not train_entries or not val_entries:
        raise ValueError("manifest needs nonempty train and validation splits")
    preprocessed_dir = Path(preprocessed_dir)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = run_dir / TRAINING_LOG_NAME
    if not log_path.exists():
        log_path.write_text("epoch,train_brier,validation_auc,elapsed_seconds\n")

    _seed_torch(config)
    model = build_backbone(config.backbone, config.pretrained_init)
    optimizer = torch.optim.RMSprop(
        model.parameters(),
        lr=config.learning_rate,
        alpha=config.rmsprop_decay,
        eps=config.rmsprop_epsilon,
        weight_decay=config.weight_decay,
    )
    loss_fn = nn.BCEWithLogitsLoss()
    state = TrainingRunState()
    started = time.time()

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order_rng = np.random.default_rng((config.seed, epoch))
        aug_rng = np.random.default_rng((config.augmentation.rng_seed, config.seed, epoch))
        order = order_rng.permutation(len(train_entries))
        epoch_scores: List[np.ndarray] = []
        epoch_targets: List[np.ndarray] = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_entries[i] for i in order[start : start + config.batch_size]]
            x, y = _load_batch(
                batch, preprocessed_dir, config.normalization, config.augmentation, aug_rng
            )
            optimizer.zero_grad()
            logits = model(x)
            loss = loss_fn(logits, y)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(epoch)
            loss.backward()
            optimizer.step()
            epoch_scores.append(torch.sigmoid(logits.detach()).numpy())
            epoch_targets.append(y.numpy())

        train_brier = _brier_arrays(
            np.concatenate(epoch_scores), np.concatenate(epoch_targets)
        )
        val_auc = _validation_auc(model, val_entries, preprocessed_dir, config)
        stop, state = early_stop_decision(state, val_auc, config)
        state.history.append((epoch, train_brier, val_auc))
        if state.best_epoch == epoch:
            ckpt_path = run_dir / f"checkpoint_epoch{epoch:03d}.pt"
            save_checkpoint(ckpt_path, model, config, state.best_auc, epoch)
            state.checkpoints[epoch] = str(ckpt_path)
        elapsed = time.time() - started
        with open(log_path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [epoch, f"{train_brier:.6f}", f"{val_auc:.6f}", f"{elapsed:.1f}"]
            )
        if stop:
            break

    best_path = Path(state.checkpoints[state.best_epoch])
    return best_path, state


def train_ensemble(
    manifest: DatasetManifest,
    config: TrainingConfig,
    ensemble: EnsembleSpec,
    preprocessed_dir: Path,
    run_dir: Path,
) -> List[Path]:
    """Run one train_one per member seed; members differ only in seed."""
    run_dir = Path(run_dir)
    checkpoints: List[Path] = []
    for index, seed in enumerate(ensemble.member_seeds):
        member_config = replace(config, seed=seed)
        member_dir = run_dir / f"member_{index:02d}"
        try:
            ckpt, _ = train_one(manifest, member_config, preprocessed_dir, member_dir)
        except Exception as exc:
            raise EnsembleMemberFailed(index, exc) from exc
        checkpoints.append(ckpt)
    return checkpoints
