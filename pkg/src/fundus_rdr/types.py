"""Shared domain vocabulary: severity grades, binary labels, gradability, predictions.

Every other module depends only on these definitions. All types are
immutable values and safe to share between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum, IntEnum
from typing import Optional


class IcdrGrade(IntEnum):
    """Five-level diabetic retinopathy severity grade (0..4)."""

    NONE = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3
    PROLIFERATIVE = 4


# Severity at or above which an image counts as referable.
REFERABLE_CUTOFF = IcdrGrade.MODERATE


@dataclass(frozen=True)
class RdrLabel:
    """Binary referable-DR label, derived from an IcdrGrade."""

    referable: bool

    def as_int(self) -> int:
        return int(self.referable)


def binarize_rdr(grade: IcdrGrade) -> RdrLabel:
    """Map a severity grade to the binary referable label (moderate or worse)."""
    return RdrLabel(referable=grade >= REFERABLE_CUTOFF)


class GradabilityStatus(Enum):
    GRADABLE = "gradable"
    UNGRADABLE = "ungradable"
    UNKNOWN = "unknown"


class ImageQuality(Enum):
    EXCELLENT = "excellent"
    GOOD = "good"
    ADEQUATE = "adequate"
    INSUFFICIENT = "insufficient"


# Qualities at or above "adequate" make an image gradable.
GRADABLE_QUALITIES = frozenset(
    {ImageQuality.EXCELLENT, ImageQuality.GOOD, ImageQuality.ADEQUATE}
)


def status_for_quality(quality: ImageQuality) -> GradabilityStatus:
    if quality in GRADABLE_QUALITIES:
        return GradabilityStatus.GRADABLE
    return GradabilityStatus.UNGRADABLE


@dataclass(frozen=True)
class Gradability:
    """Coarse gradable/ungradable/unknown status plus an optional finer quality.

    When a quality is present the status must be the one it implies; images
    not yet human-graded carry UNKNOWN status and no quality.
    """

    status: GradabilityStatus = GradabilityStatus.UNKNOWN
    quality: Optional[ImageQuality] = None

    def __post_init__(self) -> None:
        if self.quality is not None and self.status != status_for_quality(self.quality):
            raise ValueError(
                f"status {self.status.value!r} inconsistent with quality "
                f"{self.quality.value!r}"
            )

    @classmethod
    def from_quality(cls, quality: ImageQuality) -> "Gradability":
        return cls(status=status_for_quality(quality), quality=quality)


@dataclass(frozen=True)
class GradeRecord:
    """Per-image grading outcome: severity grade, derived rDR label, gradability."""

    image_id: str
    grade: IcdrGrade
    rdr: RdrLabel = field(default=None)  # type: ignore[assignment]
    gradability: Gradability = Gradability()
    grader_id: Optional[str] = None
    timestamp: Optional[datetime] = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be nonempty")
        derived = binarize_rdr(self.grade)
        if self.rdr is None:
            object.__setattr__(self, "rdr", derived)
        elif self.rdr != derived:
            raise ValueError(
                f"rdr label {self.rdr} inconsistent with grade {int(self.grade)}"
            )
        if self.timestamp is not None and self.timestamp.tzinfo is None:
            object.__setattr__(
                self, "timestamp", self.timestamp.replace(tzinfo=timezone.utc)
            )


@dataclass(frozen=True)
class PredictionRecord:
    """One model's score for one image; scores live in [0, 1]."""

    image_id: str
    score: float
    model_id: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def utc_now() -> datetime:
    return datetime.now(timezone.utc)
