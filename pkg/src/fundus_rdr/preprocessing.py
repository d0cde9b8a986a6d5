"""Fundus photograph preprocessing: disc localization, square crop/resize, pixel scaling.

Raw screening photographs show a bright, roughly circular fundus disc on a
dark background. The disc is found by thresholding the grayscale image at a
fraction of its maximum intensity and taking the largest connected bright
region; the crop window is the axis-aligned square of side 2*radius centered
on the disc, padded with black where it leaves the frame, then resized with
bilinear interpolation. All operations are pure given an explicit RNG and
safe to run on parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

import cv2
import numpy as np
from PIL import Image
from scipy import ndimage

DEFAULT_TARGET_SIZE = 299
DEFAULT_LOCALIZATION_THRESHOLD_FRACTION = 0.1
MIN_FUNDUS_RADIUS_PX = 10.0


class LocalizationFailed(ValueError):
    """No usable bright disc found; caller may mark the image ungradable."""


class NormalizationMethod(Enum):
    STANDARDIZE = "standardize"
    UNIT_RANGE = "unit_range"
    SYMMETRIC_RANGE = "symmetric_range"

    @property
    def value_range(self) -> Optional[Tuple[float, float]]:
        """Output range the method guarantees; None for standardize."""
        if self is NormalizationMethod.UNIT_RANGE:
            return (0.0, 1.0)
        if self is NormalizationMethod.SYMMETRIC_RANGE:
            return (-1.0, 1.0)
        return None


@dataclass(frozen=True)
class FundusCircle:
    center_x: float
    center_y: float
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class AugmentationConfig:
    horizontal_flip: bool = True
    vertical_flip: bool = True
    brightness_delta: float = 0.1
    contrast_range: Tuple[float, float] = (0.9, 1.1)
    saturation_range: Tuple[float, float] = (0.9, 1.1)
    hue_delta: float = 0.02
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("brightness_delta", "hue_delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("contrast_range", "saturation_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be well-ordered, got ({lo}, {hi})")

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        return cls(
            horizontal_flip=False,
            vertical_flip=False,
            brightness_delta=0.0,
            contrast_range=(1.0, 1.0),
            saturation_range=(1.0, 1.0),
            hue_delta=0.0,
        )


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = DEFAULT_TARGET_SIZE
    localization_threshold_fraction: float = DEFAULT_LOCALIZATION_THRESHOLD_FRACTION
    interpolation: str = "bilinear"
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)

    def __post_init__(self) -> None:
        if self.target_size < 32:
            raise ValueError(f"target_size must be >= 32, got {self.target_size}")
        if not 0.0 < self.localization_threshold_fraction < 1.0:
            raise ValueError("localization_threshold_fraction must be in (0, 1)")
        if self.interpolation != "bilinear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")


def _require_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.size == 0:
        raise ValueError(f"expected nonempty HxWx3 image, got shape {image.shape}")
    return image


def locate_fundus(
    image: np.ndarray,
    threshold_fraction: float = DEFAULT_LOCALIZATION_THRESHOLD_FRACTION,
) -> FundusCircle:
    """Find the bright fundus disc against the dark background.

    Thresholds the grayscale image at threshold_fraction * max intensity,
    takes the largest 8-connected bright region, and fits center = midpoint
    of its bounding extents, radius = half the larger extent.
    """
    image = _require_rgb(image)
    gray = image.astype(np.float32).mean(axis=2)
    mask = gray > threshold_fraction * float(gray.max())
    if not mask.any():
        raise LocalizationFailed("no pixel exceeds the localization threshold")
    labeled, n_regions = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    sizes = ndimage.sum_labels(np.ones_like(labeled), labeled, index=np.arange(1, n_regions + 1))
    ys, xs = np.nonzero(labeled == int(np.argmax(sizes)) + 1)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    radius = max(x1 - x0 + 1, y1 - y0 + 1) / 2.0
    if radius < MIN_FUNDUS_RADIUS_PX:
        raise LocalizationFailed(f"detected radius {radius:.1f}px below minimum")
    return FundusCircle(center_x=(x0 + x1) / 2.0, center_y=(y0 + y1) / 2.0, radius=radius)


def crop_resize(
    image: np.ndarray, circle: FundusCircle, config: PreprocessConfig
) -> np.ndarray:
    """Crop the square of side 2*radius centered on the disc and resize.

    The window is padded with black where it exceeds the source bounds; the
    fundus center lands on the output center up to rounding.
    """
    image = _require_rgb(image)
    h, w = image.shape[:2]
    side = max(int(round(2.0 * circle.radius)), 1)
    x0 = int(round(circle.center_x - circle.radius))
    y0 = int(round(circle.center_y - circle.radius))
    window = np.zeros((side, side, 3), dtype=image.dtype)
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + side, w), min(y0 + side, h)
    if sx1 > sx0 and sy1 > sy0:
        window[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = image[sy0:sy1, sx0:sx1]
    size = config.target_size
    if side == size:
        return window.copy()
    return cv2.resize(window, (size, size), interpolation=cv2.INTER_LINEAR)


STANDARDIZE_STD_GUARD = 1e-6


def normalize(image: np.ndarray, method: NormalizationMethod) -> np.ndarray:
    """Scale an 8-bit image to float32 per the chosen method.

    unit_range: v/255. symmetric_range: v/127.5 - 1. standardize: subtract the
    per-image mean and divide by the per-image standard deviation over all
    pixels and channels; constant images (std below guard) map to all zeros.
    """
    image = _require_rgb(image)
    values = image.astype(np.float64)
    if method is NormalizationMethod.UNIT_RANGE:
        out = values / 255.0
    elif method is NormalizationMethod.SYMMETRIC_RANGE:
        out = values / 127.5 - 1.0
    else:
        std = values.std()
        if std < STANDARDIZE_STD_GUARD:
            out = np.zeros_like(values)
        else:
            out = (values - values.mean()) / std
    return out.astype(np.float32)


def _hue_rotation_matrix(angle: float) -> np.ndarray:
    # rotation of RGB space about the gray axis (1,1,1)/sqrt(3)
    k = np.full(3, 1.0 / np.sqrt(3.0))
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    c, s = np.cos(angle), np.sin(angle)
    return c * np.eye(3) + s * kx + (1 - c) * np.outer(k, k)


def augment(
    tensor: np.ndarray,
    config: AugmentationConfig,
    rng: np.random.Generator,
    normalization: Optional[NormalizationMethod] = None,
) -> np.ndarray:
    """Random flips then brightness/contrast/saturation/hue jitter, in fixed order.

    Deterministic given the generator state. Identity settings skip each step
    entirely so the no-op config returns the input unchanged, bit for bit.
    Output is clamped to the normalization method's range when it has one.
    """
    out = np.asarray(tensor, dtype=np.float32)
    if config.horizontal_flip and rng.random() < 0.5:
        out = out[:, ::-1, :]
    if config.vertical_flip and rng.random() < 0.5:
        out = out[::-1, :, :]
    if config.brightness_delta > 0:
        out = out + rng.uniform(-config.brightness_delta, config.brightness_delta)
    lo, hi = config.contrast_range
    if (lo, hi) != (1.0, 1.0):
        factor = rng.uniform(lo, hi)
        mean = out.mean()
        out = mean + factor * (out - mean)
    lo, hi = config.saturation_range
    if (lo, hi) != (1.0, 1.0):
        factor = rng.uniform(lo, hi)
        gray = out.mean(axis=2, keepdims=True)
        out = gray + factor * (out - gray)
    if config.hue_delta > 0:
        angle = rng.uniform(-config.hue_delta, config.hue_delta) * 2.0 * np.pi
        out = out @ _hue_rotation_matrix(angle).T.astype(np.float32)
    if normalization is not None and normalization.value_range is not None:
        out = np.clip(out, *normalization.value_range)
    return np.ascontiguousarray(out, dtype=np.float32)


def load_rgb(path: Path) -> np.ndarray:
    """Read an 8-bit RGB image (JPEG, TIFF, PNG, ...) as an HxWx3 uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_rgb(image: np.ndarray, path: Path) -> None:
    Image.fromarray(_require_rgb(image).astype(np.uint8), mode="RGB").save(path)
