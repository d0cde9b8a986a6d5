"""Image-quality grading backend: serves images, records judgments durably.

One grader works through a manifest in order; the session cursor always
points at the next entry whose gradability is unknown. Each accepted grade is
appended to the grades CSV and fsync'd before the response goes out, so a
killed and restarted backend resumes exactly after the last acknowledged
image. The log is append-only; duplicate records for an image resolve by
latest timestamp on load (a later record supersedes an earlier one).
"""

from __future__ import annotations

import csv
import mimetypes
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from pydantic import BaseModel

from .dataset import (
    GRADES_FILE_COLUMNS,
    DatasetManifest,
    ManifestEntry,
    load_quality_grades,
)
from .types import GradabilityStatus, ImageQuality, status_for_quality, utc_now

DEFAULT_INSTRUCTIONS = (
    "Judge photographic quality only, not disease. Images that are out of "
    "focus, underexposed, or overexposed are of insufficient quality; images "
    "of at least adequate quality count as gradable."
)


class SessionComplete(Exception):
    """No ungraded images remain in the session."""


class OutOfOrderSubmission(ValueError):
    """Submitted image id does not match the session cursor."""


class UnknownQuality(ValueError):
    pass


class NothingToUndo(ValueError):
    pass


@dataclass
class GradingProgress:
    image_id: Optional[str]
    graded: int
    remaining: int
    total: int


class GradingSession:
    """Cursor over a manifest's entries, persisted via the grades file."""

    def __init__(
        self,
        session_id: str,
        grader_id: str,
        manifest: DatasetManifest,
        grades_path: Path,
    ):
        self.session_id = session_id
        self.grader_id = grader_id
        self.entries: List[ManifestEntry] = list(manifest.entries)
        self.grades_path = Path(grades_path)
        self._graded: Dict[str, ImageQuality] = {}
        self._load_existing()
        self.cursor = 0
        self._advance_past_graded()

    def _load_existing(self) -> None:
        if self.grades_path.exists():
            for image_id, row in load_quality_grades(self.grades_path).items():
                self._graded[image_id] = row.quality
        else:
            self.grades_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.grades_path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(GRADES_FILE_COLUMNS)

    def _advance_past_graded(self) -> None:
        while self.cursor < len(self.entries) and (
            self.entries[self.cursor].image_id in self._graded
            or self.entries[self.cursor].grade_record.gradability.status
            != GradabilityStatus.UNKNOWN
        ):
            self.cursor += 1

    def progress(self) -> GradingProgress:
        graded = sum(1 for e in self.entries if e.image_id in self._graded)
        current = (
            self.entries[self.cursor].image_id if self.cursor < len(self.entries) else None
        )
        return GradingProgress(
            image_id=current,
            graded=graded,
            remaining=len(self.entries) - self.cursor,
            total=len(self.entries),
        )

    def next_image(self) -> GradingProgress:
        """Current cursor image plus counts; idempotent until a grade lands."""
        if self.cursor >= len(self.entries):
            raise SessionComplete()
        return self.progress()

    def image_path(self, image_id: str) -> Path:
        for e in self.entries:
            if e.image_id == image_id:
                return Path(e.file_path)
        raise KeyError(image_id)

    def submit_grade(self, image_id: str, quality: str) -> GradingProgress:
        """Record a quality judgment for the cursor image and advance.

        The record is appended and fsync'd before this returns, so an
        acknowledged grade survives a backend kill.
        """
        if self.cursor >= len(self.entries):
            raise SessionComplete()
        expected = self.entries[self.cursor].image_id
        if image_id != expected:
            raise OutOfOrderSubmission(
                f"expected grade for {expected!r}, got {image_id!r}"
            )
        try:
            q = ImageQuality(quality)
        except ValueError:
            raise UnknownQuality(f"unknown quality {quality!r}") from None
        status = status_for_quality(q)
        with open(self.grades_path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [image_id, q.value, status.value, self.grader_id, utc_now().isoformat()]
            )
            fh.flush()
            os.fsync(fh.fileno())
        self._graded[image_id] = q
        self.cursor += 1
        self._advance_past_graded()
        return self.progress()

    def undo_last(self) -> GradingProgress:
        """Step the cursor back to the most recently graded entry.

        The earlier record stays in the append-only log; the re-grade that
        follows supersedes it (last write wins on load).
        """
        for i in range(min(self.cursor, len(self.entries)) - 1, -1, -1):
            if self.entries[i].image_id in self._graded:
                del self._graded[self.entries[i].image_id]
                self.cursor = i
                return self.progress()
        raise NothingToUndo("no graded image before the cursor")


class GradeBody(BaseModel):
    image_id: str
    quality: str


def build_app(
    session: GradingSession,
    instructions: str = DEFAULT_INSTRUCTIONS,
    ui_dir: Optional[Path] = None,
) -> FastAPI:
    """FastAPI app exposing the grading endpoints (and the UI when bundled)."""
    app = FastAPI(title="fundus-rdr grading backend")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def progress_payload(p: GradingProgress, status: str = "in_progress") -> dict:
        return {
            "status": status,
            "session_id": session.session_id,
            "image_id": p.image_id,
            "image_url": f"/image/{p.image_id}" if p.image_id else None,
            "graded": p.graded,
            "remaining": p.remaining,
            "total": p.total,
            "instructions": instructions,
            "qualities": [q.value for q in ImageQuality],
        }

    @app.get("/session/{session_id}/next")
    def get_next(session_id: str):
        if session_id != session.session_id:
            raise HTTPException(status_code=404, detail="unknown session")
        try:
            return progress_payload(session.next_image())
        except SessionComplete:
            return progress_payload(session.progress(), status="complete")

    @app.post("/session/{session_id}/grade")
    def post_grade(session_id: str, body: GradeBody):
        if session_id != session.session_id:
            raise HTTPException(status_code=404, detail="unknown session")
        try:
            progress = session.submit_grade(body.image_id, body.quality)
        except SessionComplete:
            raise HTTPException(status_code=409, detail="session complete")
        except OutOfOrderSubmission as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except UnknownQuality as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        status = "complete" if progress.image_id is None else "in_progress"
        return progress_payload(progress, status=status)

    @app.post("/session/{session_id}/undo")
    def post_undo(session_id: str):
        if session_id != session.session_id:
            raise HTTPException(status_code=404, detail="unknown session")
        try:
            return progress_payload(session.undo_last())
        except NothingToUndo as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/image/{image_id}")
    def get_image(image_id: str):
        try:
            path = session.image_path(image_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown image")
        if not path.exists():
            raise HTTPException(status_code=404, detail="image file missing")
        media_type = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=media_type)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


__all__ = [
    "DEFAULT_INSTRUCTIONS",
    "GradeBody",
    "GradingProgress",
    "GradingSession",
    "NothingToUndo",
    "OutOfOrderSubmission",
    "SessionComplete",
    "UnknownQuality",
    "build_app",
]
