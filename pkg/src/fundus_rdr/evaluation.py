"""ROC/AUC evaluation: 200-threshold curves, operating points, ensemble fusion, reports.

The ROC is sampled at evenly spaced thresholds over [0, 1] (descending), with
predicted-positive defined as score >= threshold. AUC is the trapezoid over
sensitivity vs (1 - specificity) with the (0,0) and (1,1) endpoints appended
when absent. The same code path serves both early stopping during training
and the final test-set reports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .types import PredictionRecord, RdrLabel

DEFAULT_N_THRESHOLDS = 200
HIGH_SENSITIVITY_CONSTRAINT = 0.95
HIGH_SPECIFICITY_CONSTRAINT = 0.98


class DegenerateLabels(ValueError):
    """All labels belong to one class; sensitivity/specificity undefined."""


class MismatchedCoverage(ValueError):
    """Ensemble member prediction lists do not cover the same image ids."""


class OperatingMode(Enum):
    HIGH_SENSITIVITY = "high_sensitivity"
    HIGH_SPECIFICITY = "high_specificity"


@dataclass(frozen=True)
class RocCurve:
    """Thresholded operating points, thresholds strictly decreasing."""

    thresholds: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    positives: int
    negatives: int

    def points(self) -> List[Tuple[float, float, float]]:
        return list(
            zip(self.thresholds.tolist(), self.sensitivity.tolist(), self.specificity.tolist())
        )


@dataclass(frozen=True)
class OperatingPoint:
    mode: OperatingMode
    threshold: float
    sensitivity: float
    specificity: float
    constraint: float
    constraint_met: bool = True


@dataclass
class EvaluationReport:
    test_set_name: str
    auc: float
    operating_points: Dict[str, OperatingPoint]
    n_images: int
    normalization: str
    ensemble_size: int
    flags: List[str] = field(default_factory=list)


def _scores_labels(
    predictions: Sequence[PredictionRecord],
    labels: Mapping[str, RdrLabel],
) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.empty(len(predictions), dtype=np.float64)
    y = np.empty(len(predictions), dtype=np.int64)
    for i, p in enumerate(predictions):
        if p.image_id not in labels:
            raise KeyError(f"no label for image {p.image_id!r}")
        scores[i] = p.score
        y[i] = labels[p.image_id].as_int()
    return scores, y


def roc_curve_arrays(
    scores: np.ndarray, y: np.ndarray, n_thresholds: int = DEFAULT_N_THRESHOLDS
) -> RocCurve:
    """Compute the ROC over n_thresholds evenly spaced descending thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(
            f"need both classes: {n_pos} positives, {n_neg} negatives"
        )
    thresholds = np.linspace(1.0, 0.0, n_thresholds)
    # predicted-positive at score >= t, vectorized over the threshold grid
    pred_pos = scores[None, :] >= thresholds[:, None]
    tp = (pred_pos & (y == 1)[None, :]).sum(axis=1)
    fp = (pred_pos & (y == 0)[None, :]).sum(axis=1)
    sens = tp / n_pos
    spec = (n_neg - fp) / n_neg
    return RocCurve(
        thresholds=thresholds,
        sensitivity=sens,
        specificity=spec,
        positives=n_pos,
        negatives=n_neg,
    )


def roc_curve(
    predictions: Sequence[PredictionRecord],
    labels: Mapping[str, RdrLabel],
    n_thresholds: int = DEFAULT_N_THRESHOLDS,
) -> RocCurve:
    scores, y = _scores_labels(predictions, labels)
    return roc_curve_arrays(scores, y, n_thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under sensitivity vs (1 - specificity)."""
    x = 1.0 - curve.specificity
    y = curve.sensitivity
    # thresholds descend, so x ascends already; anchor the endpoints
    if x[0] != 0.0 or y[0] != 0.0:
        x = np.concatenate(([0.0], x))
        y = np.concatenate(([0.0], y))
    if x[-1] != 1.0 or y[-1] != 1.0:
        x = np.concatenate((x, [1.0]))
        y = np.concatenate((y, [1.0]))
    return float(np.trapezoid(y, x))


def auc_from_predictions(
    predictions: Sequence[PredictionRecord],
    labels: Mapping[str, RdrLabel],
    n_thresholds: int = DEFAULT_N_THRESHOLDS,
) -> float:
    return auc(roc_curve(predictions, labels, n_thresholds))


def _rates_at_threshold(
    scores: np.ndarray, y: np.ndarray, threshold: float
) -> Tuple[float, float]:
    pred_pos = scores >= threshold
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    tp = int((pred_pos & (y == 1)).sum())
    fp = int((pred_pos & (y == 0)).sum())
    return tp / n_pos, (n_neg - fp) / n_neg


def select_operating_point(
    curve: RocCurve,
    predictions: Sequence[PredictionRecord],
    labels: Mapping[str, RdrLabel],
    mode: OperatingMode,
    constraint: Optional[float] = None,
) -> OperatingPoint:
    """Pick the curve threshold meeting the constraint that maximizes the other rate.

    high_sensitivity: among thresholds with sensitivity >= constraint, maximize
    specificity. high_specificity: the symmetric rule. When no threshold
    satisfies the constraint, the closest one is returned and the point is
    flagged via constraint_met=False. The reported rates are recomputed from
    the predictions at the chosen threshold.
    """
    if constraint is None:
        constraint = (
            HIGH_SENSITIVITY_CONSTRAINT
            if mode == OperatingMode.HIGH_SENSITIVITY
            else HIGH_SPECIFICITY_CONSTRAINT
        )
    if not 0.0 < constraint < 1.0:
        raise ValueError(f"constraint {constraint} outside (0, 1)")
    if mode == OperatingMode.HIGH_SENSITIVITY:
        constrained, objective = curve.sensitivity, curve.specificity
    else:
        constrained, objective = curve.specificity, curve.sensitivity
    feasible = constrained >= constraint
    if feasible.any():
        candidates = np.flatnonzero(feasible)
        best = candidates[np.argmax(objective[candidates])]
        met = True
    else:
        best = int(np.argmin(constraint - constrained))
        met = False
    threshold = float(curve.thresholds[best])
    scores, y = _scores_labels(predictions, labels)
    sens, spec = _rates_at_threshold(scores, y, threshold)
    return OperatingPoint(
        mode=mode,
        threshold=threshold,
        sensitivity=sens,
        specificity=spec,
        constraint=constraint,
        constraint_met=met,
    )


def ensemble_mean(
    per_model_predictions: Sequence[Sequence[PredictionRecord]],
    model_id: str = "ensemble",
) -> List[PredictionRecord]:
    """Fuse member predictions by per-image arithmetic mean, ordered by image id."""
    if not per_model_predictions:
        raise ValueError("no member prediction lists given")
    coverages = [frozenset(p.image_id for p in preds) for preds in per_model_predictions]
    base = coverages[0]
    for i, cov in enumerate(coverages[1:], start=1):
        if cov != base:
            missing = sorted((base ^ cov))[:5]
            raise MismatchedCoverage(
                f"member {i} covers different images (e.g. {missing})"
            )
    member_scores: Dict[str, List[float]] = {iid: [] for iid in base}
    for preds in per_model_predictions:
        for p in preds:
            member_scores[p.image_id].append(p.score)
    fused = []
    for iid in sorted(base):
        values = member_scores[iid]
        # exact-sum mean is order independent; identical members fuse to
        # exactly the member score
        score = values[0] if min(values) == max(values) else math.fsum(values) / len(values)
        fused.append(PredictionRecord(image_id=iid, score=score, model_id=model_id))
    return fused


def build_report(
    test_set_name: str,
    predictions: Sequence[PredictionRecord],
    labels: Mapping[str, RdrLabel],
    normalization: str,
    ensemble_size: int = 1,
    n_thresholds: int = DEFAULT_N_THRESHOLDS,
    sensitivity_constraint: float = HIGH_SENSITIVITY_CONSTRAINT,
    specificity_constraint: float = HIGH_SPECIFICITY_CONSTRAINT,
) -> Tuple[EvaluationReport, RocCurve]:
    curve = roc_curve(predictions, labels, n_thresholds)
    hs = select_operating_point(
        curve, predictions, labels, OperatingMode.HIGH_SENSITIVITY, sensitivity_constraint
    )
    hp = select_operating_point(
        curve, predictions, labels, OperatingMode.HIGH_SPECIFICITY, specificity_constraint
    )
    flags = []
    for pt in (hs, hp):
        if not pt.constraint_met:
            flags.append(
                f"{pt.mode.value}: no threshold met constraint {pt.constraint:.3f}; "
                f"closest point reported"
            )
    report = EvaluationReport(
        test_set_name=test_set_name,
        auc=auc(curve),
        operating_points={hs.mode.value: hs, hp.mode.value: hp},
        n_images=len(predictions),
        normalization=normalization,
        ensemble_size=ensemble_size,
        flags=flags,
    )
    return report, curve


# Published benchmark numbers the shipped full-scale configs are compared
# against: per normalization method and test set, the replication study's AUC
# and operating points next to the original study's (rendered in parentheses).
REFERENCE_RESULTS = {
    ("symmetric_range", "kaggle_eyepacs_test"): {
        "auc": 0.94, "original_auc": 0.99,
        "high_sensitivity": {"sens": 89.9, "spec": 83.8, "orig_sens": 97.5, "orig_spec": 93.4},
        "high_specificity": {"sens": 83.4, "spec": 90.1, "orig_sens": 90.3, "orig_spec": 98.1},
    },
    ("symmetric_range", "messidor2"): {
        "auc": 0.80, "original_auc": 0.99,
        "high_sensitivity": {"sens": 73.7, "spec": 69.7, "orig_sens": 96.1, "orig_spec": 93.9},
        "high_specificity": {"sens": 67.9, "spec": 76.4, "orig_sens": 87.0, "orig_spec": 98.5},
    },
    ("standardize", "kaggle_eyepacs_test"): {
        "auc": 0.91, "original_auc": 0.99,
        "high_sensitivity": {"sens": 88.3, "spec": 77.1, "orig_sens": 97.5, "orig_spec": 93.4},
        "high_specificity": {"sens": 78.8, "spec": 88.9, "orig_sens": 90.3, "orig_spec": 98.1},
    },
    ("standardize", "messidor2"): {
        "auc": 0.76, "original_auc": 0.99,
        "high_sensitivity": {"sens": 73.4, "spec": 60.9, "orig_sens": 96.1, "orig_spec": 93.9},
        "high_specificity": {"sens": 65.0, "spec": 74.1, "orig_sens": 87.0, "orig_spec": 98.5},
    },
    ("unit_range", "kaggle_eyepacs_test"): {
        "auc": 0.86, "original_auc": 0.99,
        "high_sensitivity": {"sens": 83.4, "spec": 72.7, "orig_sens": 97.5, "orig_spec": 93.4},
        "high_specificity": {"sens": 73.9, "spec": 82.7, "orig_sens": 90.3, "orig_spec": 98.1},
    },
    ("unit_range", "messidor2"): {
        "auc": 0.75, "original_auc": 0.99,
        "high_sensitivity": {"sens": 73.7, "spec": 65.9, "orig_sens": 96.1, "orig_spec": 93.9},
        "high_specificity": {"sens": 64.5, "spec": 75.1, "orig_sens": 87.0, "orig_spec": 98.5},
    },
}

_NORMALIZATION_HEADINGS = {
    "symmetric_range": "Normalizing images to [-1, 1] range",
    "standardize": "Image standardization",
    "unit_range": "Normalizing images to [0, 1] range",
}

_TEST_SET_HEADINGS = {
    "kaggle_eyepacs_test": "Kaggle EyePACS test",
    "messidor2": "Messidor-2",
}


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "test_set_name": report.test_set_name,
        "auc": report.auc,
        "n_images": report.n_images,
        "normalization": report.normalization,
        "ensemble_size": report.ensemble_size,
        "flags": report.flags,
        "operating_points": {
            name: {
                "mode": pt.mode.value,
                "threshold": pt.threshold,
                "sensitivity": pt.sensitivity,
                "specificity": pt.specificity,
                "constraint": pt.constraint,
                "constraint_met": pt.constraint_met,
            }
            for name, pt in report.operating_points.items()
        },
    }


def report_from_dict(data: dict) -> EvaluationReport:
    points = {
        name: OperatingPoint(
            mode=OperatingMode(p["mode"]),
            threshold=p["threshold"],
            sensitivity=p["sensitivity"],
            specificity=p["specificity"],
            constraint=p["constraint"],
            constraint_met=p["constraint_met"],
        )
        for name, p in data["operating_points"].items()
    }
    return EvaluationReport(
        test_set_name=data["test_set_name"],
        auc=data["auc"],
        operating_points=points,
        n_images=data["n_images"],
        normalization=data["normalization"],
        ensemble_size=data["ensemble_size"],
        flags=list(data.get("flags", [])),
    )


def write_report_json(report: EvaluationReport, path: Path) -> None:
    path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n")


def write_roc_csv(curve: RocCurve, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "sensitivity", "specificity"])
        for t, sens, spec in curve.points():
            writer.writerow([f"{t:.10g}", f"{sens:.10g}", f"{spec:.10g}"])


def write_predictions_csv(predictions: Sequence[PredictionRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "score", "model_id"])
        for p in predictions:
            writer.writerow([p.image_id, f"{p.score:.10g}", p.model_id])


def read_predictions_csv(path: Path) -> List[PredictionRecord]:
    records: List[PredictionRecord] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                PredictionRecord(
                    image_id=row["image_id"],
                    score=float(row["score"]),
                    model_id=row["model_id"],
                )
            )
    return records


def _reference_cell(ref: dict, key: str) -> List[str]:
    d = ref[key]
    return [
        f"{d['sens']:.1f} ({d['orig_sens']:.1f})% sens.",
        f"{d['spec']:.1f} ({d['orig_spec']:.1f})% spec.",
    ]


def format_reference_table(measured: Optional[Iterable[EvaluationReport]] = None) -> str:
    """Render the benchmark comparison table; original-study numbers in parentheses.

    When measured reports are supplied, each matching (normalization, test set)
    row gains a line with the measured AUC next to the published ones.
    """
    by_key: Dict[Tuple[str, str], EvaluationReport] = {}
    for rep in measured or []:
        by_key[(rep.normalization, rep.test_set_name)] = rep

    cols = ("Test set", "High sensitivity", "High specificity", "AUC score")
    widths = (24, 26, 26, 14)
    lines: List[str] = ["Replication results", ""]
    for norm in ("symmetric_range", "standardize", "unit_range"):
        lines.append(_NORMALIZATION_HEADINGS[norm])
        lines.append("-" * sum(widths))
        lines.append("".join(c.ljust(w) for c, w in zip(cols, widths)))
        for test_set in ("kaggle_eyepacs_test", "messidor2"):
            ref = REFERENCE_RESULTS[(norm, test_set)]
            hs = _reference_cell(ref, "high_sensitivity")
            hp = _reference_cell(ref, "high_specificity")
            auc_cell = f"{ref['auc']:.2f} ({ref['original_auc']:.2f})"
            rows = [
                (_TEST_SET_HEADINGS[test_set], hs[0], hp[0], auc_cell),
                ("", hs[1], hp[1], ""),
            ]
            rep = by_key.pop((norm, test_set), None)
            if rep is not None:
                rows.append(("", "", "", f"measured {rep.auc:.2f}"))
            for row in rows:
                lines.append("".join(c.ljust(w) for c, w in zip(row, widths)))
        lines.append("")
    if by_key:
        lines.append("Measured runs outside the benchmark sets")
        lines.append("-" * sum(widths))
        for (norm, test_set), rep in sorted(by_key.items()):
            hs = rep.operating_points.get("high_sensitivity")
            hp = rep.operating_points.get("high_specificity")
            row = (
                test_set,
                f"{100 * hs.sensitivity:.1f}% sens. {100 * hs.specificity:.1f}% spec.",
                f"{100 * hp.sensitivity:.1f}% sens. {100 * hp.specificity:.1f}% spec.",
                f"measured {rep.auc:.2f}",
            )
            lines.append("".join(c.ljust(w) for c, w in zip(row, widths)))
            lines.append(f"  ({norm}, n={rep.n_images}, ensemble={rep.ensemble_size})")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
