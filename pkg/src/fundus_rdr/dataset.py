"""Manifest ingestion, class-balance-preserving sampling, and gradability filtering.

A manifest is the persisted record of every image's identity, grade,
gradability, and split assignment for a pipeline run. Grade CSVs use the
header ``image,grade``; manifests are CSVs with a fixed column order and a
bit-exact write/read/write round trip. Sampling is deterministic for a fixed
seed so reruns produce byte-identical manifests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .types import (
    Gradability,
    GradabilityStatus,
    GradeRecord,
    IcdrGrade,
    ImageQuality,
    RdrLabel,
    binarize_rdr,
    utc_now,
)

MANIFEST_COLUMNS = [
    "image_id",
    "file_path",
    "grade",
    "referable",
    "gradability",
    "split",
    "source",
    "quality",
    "grader_id",
    "timestamp",
]

GRADES_FILE_COLUMNS = ["image_id", "quality", "status", "grader_id", "timestamp"]

IMAGE_EXTENSIONS = (".png", ".jpeg", ".jpg", ".tif", ".tiff")


class Split(Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"
    EXCLUDED = "excluded"


class Source(Enum):
    EYEPACS = "eyepacs"
    MESSIDOR2 = "messidor2"
    SYNTHETIC = "synthetic"


class InsufficientPool(ValueError):
    def __init__(self, which_class: str, short_by: int):
        self.which_class = which_class
        self.short_by = short_by
        super().__init__(f"pool short {short_by} {which_class} images")


@dataclass(frozen=True)
class MalformedRow:
    row_number: int
    reason: str


@dataclass
class IngestReport:
    malformed_rows: List[MalformedRow] = field(default_factory=list)
    missing_files: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    file_path: str
    grade_record: GradeRecord
    split: Split = Split.EXCLUDED
    source: Source = Source.SYNTHETIC


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    seed: Optional[int] = None
    created: datetime = field(default_factory=utc_now)

    def __post_init__(self) -> None:
        ids = [e.image_id for e in self.entries]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})[:5]
            raise ValueError(f"duplicate image_ids in manifest: {dupes}")

    def balance_summary(self) -> Dict[str, Dict[str, int]]:
        """Per-split counts of rDR positives/negatives, recomputed from entries."""
        summary: Dict[str, Dict[str, int]] = {
            s.value: {"positive": 0, "negative": 0} for s in Split
        }
        for e in self.entries:
            key = "positive" if e.grade_record.rdr.referable else "negative"
            summary[e.split.value][key] += 1
        return summary

    def split_entries(self, split: Split) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def labels(self) -> Dict[str, RdrLabel]:
        return {e.image_id: e.grade_record.rdr for e in self.entries}


@dataclass(frozen=True)
class SplitSpec:
    n_total: int
    positive_fraction: float
    train_fraction: float = 0.8
    seed: int = 0
    gradable_only: bool = False

    def __post_init__(self) -> None:
        if self.n_total <= 0:
            raise ValueError("n_total must be positive")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ValueError("positive_fraction must be in (0, 1)")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must be in (0, 1]")


def _resolve_image_path(images_dir: Path, image_id: str) -> Optional[Path]:
    candidate = images_dir / image_id
    if candidate.suffix and candidate.exists():
        return candidate
    for ext in IMAGE_EXTENSIONS:
        p = images_dir / f"{image_id}{ext}"
        if p.exists():
            return p
    return None


def ingest_grades(
    csv_path: Path,
    source: Source,
    images_dir: Optional[Path] = None,
) -> Tuple[DatasetManifest, IngestReport]:
    """Build a manifest from a grade CSV (header ``image,grade``).

    Rows with grades outside 0..4 are rejected and reported per row; entries
    whose image file cannot be found are retained but flagged in the report.
    All entries start in the excluded split.
    """
    csv_path = Path(csv_path)
    report = IngestReport()
    entries: List[ManifestEntry] = []
    seen: set[str] = set()
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image" not in reader.fieldnames or "grade" not in reader.fieldnames:
            raise ValueError(f"{csv_path}: expected header with 'image' and 'grade' columns")
        for row_number, row in enumerate(reader, start=2):
            image_id = (row.get("image") or "").strip()
            raw_grade = (row.get("grade") or "").strip()
            if not image_id:
                report.malformed_rows.append(MalformedRow(row_number, "empty image id"))
                continue
            if image_id in seen:
                report.malformed_rows.append(
                    MalformedRow(row_number, f"duplicate image id {image_id!r}")
                )
                continue
            try:
                grade = IcdrGrade(int(raw_grade))
            except (ValueError, KeyError):
                report.malformed_rows.append(
                    MalformedRow(row_number, f"grade {raw_grade!r} outside 0..4")
                )
                continue
            if images_dir is not None:
                resolved = _resolve_image_path(Path(images_dir), image_id)
                if resolved is None:
                    report.missing_files.append(image_id)
                    file_path = str(Path(images_dir) / image_id)
                else:
                    file_path = str(resolved)
            else:
                file_path = image_id
            seen.add(image_id)
            entries.append(
                ManifestEntry(
                    image_id=image_id,
                    file_path=file_path,
                    grade_record=GradeRecord(image_id=image_id, grade=grade),
                    split=Split.EXCLUDED,
                    source=source,
                )
            )
    return DatasetManifest(entries=entries), report


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_sample(
    manifest: DatasetManifest,
    spec: SplitSpec,
    assign: str = "trainval",
) -> DatasetManifest:
    """Select a class-balanced sample from the excluded pool and assign splits.

    Picks round(n_total * positive_fraction) positives and the complement
    negatives uniformly at random under the seed, then assigns train and
    validation per class at train_fraction (or the test split as a whole when
    assign="test"). Unselected entries stay excluded.
    """
    if assign not in ("trainval", "test"):
        raise ValueError(f"assign must be 'trainval' or 'test', got {assign!r}")
    pool_idx = [
        i
        for i, e in enumerate(manifest.entries)
        if e.split == Split.EXCLUDED
        and (not spec.gradable_only or e.grade_record.gradability.status == GradabilityStatus.GRADABLE)
    ]
    pos_idx = [i for i in pool_idx if manifest.entries[i].grade_record.rdr.referable]
    neg_idx = [i for i in pool_idx if not manifest.entries[i].grade_record.rdr.referable]
    n_pos = _round_half_up(spec.n_total * spec.positive_fraction)
    n_neg = spec.n_total - n_pos
    if len(pos_idx) < n_pos:
        raise InsufficientPool("positive", n_pos - len(pos_idx))
    if len(neg_idx) < n_neg:
        raise InsufficientPool("negative", n_neg - len(neg_idx))
    rng = np.random.default_rng(spec.seed)
    chosen_pos = [pos_idx[j] for j in rng.permutation(len(pos_idx))[:n_pos]]
    chosen_neg = [neg_idx[j] for j in rng.permutation(len(neg_idx))[:n_neg]]

    assignment: Dict[int, Split] = {}
    if assign == "test":
        for i in chosen_pos + chosen_neg:
            assignment[i] = Split.TEST
    else:
        for chosen in (chosen_pos, chosen_neg):
            n_train = _round_half_up(len(chosen) * spec.train_fraction)
            for j, i in enumerate(chosen):
                assignment[i] = Split.TRAIN if j < n_train else Split.VALIDATION

    entries = [
        replace(e, split=assignment[i]) if i in assignment else e
        for i, e in enumerate(manifest.entries)
    ]
    return DatasetManifest(entries=entries, seed=spec.seed, created=manifest.created)


def filter_gradable(manifest: DatasetManifest) -> Tuple[DatasetManifest, int]:
    """Move entries without gradable status to excluded; unknown counts as not gradable.

    Grade records are never modified. Returns the filtered manifest and the
    number of entries removed from active splits.
    """
    removed = 0
    entries: List[ManifestEntry] = []
    for e in manifest.entries:
        if (
            e.split != Split.EXCLUDED
            and e.grade_record.gradability.status != GradabilityStatus.GRADABLE
        ):
            entries.append(replace(e, split=Split.EXCLUDED))
            removed += 1
        else:
            entries.append(e)
    return DatasetManifest(entries=entries, seed=manifest.seed, created=manifest.created), removed


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            rec = e.grade_record
            writer.writerow(
                [
                    e.image_id,
                    e.file_path,
                    int(rec.grade),
                    "true" if rec.rdr.referable else "false",
                    rec.gradability.status.value,
                    e.split.value,
                    e.source.value,
                    rec.gradability.quality.value if rec.gradability.quality else "",
                    rec.grader_id or "",
                    rec.timestamp.isoformat() if rec.timestamp else "",
                ]
            )


def read_manifest(path: Path) -> DatasetManifest:
    entries: List[ManifestEntry] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            quality = ImageQuality(row["quality"]) if row.get("quality") else None
            gradability = Gradability(
                status=GradabilityStatus(row["gradability"]), quality=quality
            )
            record = GradeRecord(
                image_id=row["image_id"],
                grade=IcdrGrade(int(row["grade"])),
                rdr=RdrLabel(referable=row["referable"] == "true"),
                gradability=gradability,
                grader_id=row.get("grader_id") or None,
                timestamp=datetime.fromisoformat(row["timestamp"]) if row.get("timestamp") else None,
            )
            entries.append(
                ManifestEntry(
                    image_id=row["image_id"],
                    file_path=row["file_path"],
                    grade_record=record,
                    split=Split(row["split"]),
                    source=Source(row["source"]),
                )
            )
    return DatasetManifest(entries=entries)


@dataclass(frozen=True)
class QualityGradeRow:
    image_id: str
    quality: ImageQuality
    status: GradabilityStatus
    grader_id: Optional[str]
    timestamp: Optional[datetime]


def load_quality_grades(path: Path) -> Dict[str, QualityGradeRow]:
    """Load the published image-quality grades file; later records supersede earlier.

    Duplicates resolve by latest timestamp, then by file order.
    """
    latest: Dict[str, QualityGradeRow] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ts = datetime.fromisoformat(row["timestamp"]) if row.get("timestamp") else None
            rec = QualityGradeRow(
                image_id=row["image_id"],
                quality=ImageQuality(row["quality"]),
                status=GradabilityStatus(row["status"]),
                grader_id=row.get("grader_id") or None,
                timestamp=ts,
            )
            prev = latest.get(rec.image_id)
            if prev is None or prev.timestamp is None or (
                rec.timestamp is not None and rec.timestamp >= prev.timestamp
            ):
                latest[rec.image_id] = rec
    return latest


def apply_quality_grades(
    manifest: DatasetManifest, grades: Dict[str, QualityGradeRow]
) -> DatasetManifest:
    """Attach human gradability judgments to matching manifest entries."""
    entries: List[ManifestEntry] = []
    for e in manifest.entries:
        row = grades.get(e.image_id)
        if row is None:
            entries.append(e)
            continue
        record = GradeRecord(
            image_id=e.image_id,
            grade=e.grade_record.grade,
            gradability=Gradability(status=row.status, quality=row.quality),
            grader_id=row.grader_id,
            timestamp=row.timestamp,
        )
        entries.append(replace(e, grade_record=record))
    return DatasetManifest(entries=entries, seed=manifest.seed, created=manifest.created)
