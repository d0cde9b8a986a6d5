import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))


def make_disk_image(size, cx, cy, radius, level=200, noise_sigma=0.0, rng=None):
    """Black frame with a bright disc; the generator's parameters are ground truth."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    disk = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
    img = np.zeros((size, size, 3), dtype=np.float32)
    img[disk] = level
    if noise_sigma > 0:
        img += (rng or np.random.default_rng(0)).normal(0, noise_sigma, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture
def disk_image():
    return make_disk_image(400, cx=150, cy=200, radius=80)


def build_tiny_corpus(
    root: Path,
    n_images: int = 130,
    n_trainval: int = 100,
    n_test: int = 24,
    positive_fraction: float = 0.4,
    target_size: int = 48,
    seed: int = 11,
    lesion_fraction: tuple = (0.08, 0.14),
):
    """Generate, preprocess, and split a small planted-signal corpus.

    Returns (manifest, preprocessed_dir). Kept deliberately small so training
    tests run in seconds; lesions are enlarged to survive the downscale.
    """
    from fundus_rdr.dataset import Source, SplitSpec, ingest_grades, stratified_sample
    from fundus_rdr.preprocessing import (
        PreprocessConfig,
        crop_resize,
        load_rgb,
        locate_fundus,
        save_rgb,
    )
    from fundus_rdr.synthetic import SyntheticSpec, generate_corpus

    spec = SyntheticSpec(
        n_images=n_images,
        positive_fraction=positive_fraction,
        seed=seed,
        image_size=128,
        lesion_radius_fraction=lesion_fraction,
    )
    csv_path, _, _ = generate_corpus(spec, root)
    config = PreprocessConfig(target_size=target_size)
    preprocessed = root / "preprocessed"
    preprocessed.mkdir(exist_ok=True)
    manifest, report = ingest_grades(csv_path, Source.SYNTHETIC, root / "images")
    assert not report.malformed_rows and not report.missing_files
    for entry in manifest.entries:
        img = load_rgb(Path(entry.file_path))
        circle = locate_fundus(img, config.localization_threshold_fraction)
        save_rgb(crop_resize(img, circle, config), preprocessed / f"{entry.image_id}.png")
    manifest = stratified_sample(
        manifest,
        SplitSpec(n_total=n_trainval, positive_fraction=positive_fraction, seed=seed),
    )
    manifest = stratified_sample(
        manifest,
        SplitSpec(n_total=n_test, positive_fraction=positive_fraction, seed=seed + 1),
        assign="test",
    )
    return manifest, preprocessed


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_corpus")
    return build_tiny_corpus(root)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Print one pass/fail line per acceptance criterion as it completes."""
    outcome = yield
    report = outcome.get_result()
    criterion = getattr(item.function, "_criterion", None)
    if report.when == "call" and criterion:
        label = "PASS" if report.passed else "FAIL"
        tr = item.config.pluginmanager.get_plugin("terminalreporter")
        if tr is not None:
            tr.write_line(f"\n[{label}] {criterion}")
