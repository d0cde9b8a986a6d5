"""Synthetic fundus-like corpus for desk-scale pipeline verification.

Images are a bright disc on a black background; positives additionally carry
1-5 small high-intensity blobs ("lesions") inside the disc and are graded
moderate (2), negatives none (0). Generation is deterministic under the seed
so corpora are byte-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .preprocessing import save_rgb

GRADES_CSV_NAME = "grades.csv"


@lru_cache(maxsize=4)
def _pixel_grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    return yy, xx


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int
    positive_fraction: float
    seed: int
    image_size: int = 400
    noise_sigma: float = 4.0
    # lesion radius as a fraction of the disc radius; small corpora need
    # proportionally larger lesions to survive aggressive downscaling
    lesion_radius_fraction: Tuple[float, float] = (0.05, 0.10)

    def __post_init__(self) -> None:
        if self.n_images < 4:
            raise ValueError("need at least 4 images")
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise ValueError("positive_fraction outside [0, 1]")
        if self.image_size < 64:
            raise ValueError("image_size must be >= 64")
        lo, hi = self.lesion_radius_fraction
        if not 0.0 < lo <= hi:
            raise ValueError("lesion_radius_fraction must be well-ordered and positive")


def _render_image(
    rng: np.random.Generator,
    size: int,
    positive: bool,
    noise_sigma: float,
    lesion_fraction: Tuple[float, float] = (0.05, 0.10),
) -> np.ndarray:
    radius = rng.uniform(0.35, 0.45) * size
    cx = size / 2 + rng.uniform(-0.04, 0.04) * size
    cy = size / 2 + rng.uniform(-0.04, 0.04) * size
    yy, xx = _pixel_grid(size)
    dist2 = (xx - cx) ** 2 + (yy - cy) ** 2
    img = np.zeros((size, size, 3), dtype=np.float32)
    base = rng.uniform(120.0, 180.0)
    disc = dist2 <= radius * radius
    # reddish disc with mild radial falloff, like a fundus photograph
    falloff = 1.0 - 0.25 * np.sqrt(np.clip(dist2, 0, None)) / radius
    img[..., 0] = np.where(disc, base * falloff, 0.0)
    img[..., 1] = np.where(disc, 0.55 * base * falloff, 0.0)
    img[..., 2] = np.where(disc, 0.35 * base * falloff, 0.0)
    if positive:
        n_lesions = int(rng.integers(1, 6))
        for _ in range(n_lesions):
            ang = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(0.0, 0.7) * radius
            lx, ly = cx + rad * np.cos(ang), cy + rad * np.sin(ang)
            lr = rng.uniform(*lesion_fraction) * radius
            lesion = (xx - lx) ** 2 + (yy - ly) ** 2 <= lr * lr
            level = rng.uniform(235.0, 255.0)
            img[lesion] = [level, level, level * 0.85]
    if noise_sigma > 0:
        img += rng.normal(0.0, noise_sigma, img.shape).astype(np.float32)
    return np.clip(img, 0, 255).astype(np.uint8)


def generate_corpus(spec: SyntheticSpec, out_dir: Path) -> Tuple[Path, int, int]:
    """Write the synthetic images and grades CSV; returns (csv_path, n_pos, n_neg)."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    n_pos = int(np.floor(spec.n_images * spec.positive_fraction + 0.5))
    labels = [True] * n_pos + [False] * (spec.n_images - n_pos)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(spec.n_images)
    rows: List[Tuple[str, int]] = []
    for i in range(spec.n_images):
        positive = labels[perm[i]]
        image_id = f"syn_{i:05d}"
        img = _render_image(
            rng, spec.image_size, positive, spec.noise_sigma, spec.lesion_radius_fraction
        )
        save_rgb(img, images_dir / f"{image_id}.png")
        rows.append((image_id, 2 if positive else 0))
    csv_path = out_dir / GRADES_CSV_NAME
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "grade"])
        writer.writerows(rows)
    return csv_path, n_pos, spec.n_images - n_pos
