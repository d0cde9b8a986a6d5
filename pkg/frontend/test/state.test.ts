import { describe, expect, it } from "vitest";

import {
  INITIAL_STATE,
  onLoadFailed,
  onProgressLoaded,
  onQualityKey,
  onRetry,
  onSubmitAccepted,
  onSubmitFailed,
  onUndoRequested,
} from "../src/state.js";
import { SessionProgress } from "../src/types.js";

function progress(overrides: Partial<SessionProgress> = {}): SessionProgress {
  return {
    status: "in_progress",
    session_id: "s",
    image_id: "img_000",
    image_url: "/image/img_000",
    graded: 0,
    remaining: 20,
    total: 20,
    instructions: "judge quality",
    qualities: ["excellent", "good", "adequate", "insufficient"],
    ...overrides,
  };
}

describe("state machine", () => {
  it("enters grading once progress loads", () => {
    const state = onProgressLoaded(INITIAL_STATE, progress());
    expect(state.phase).toBe("grading");
    expect(state.progress?.image_id).toBe("img_000");
  });

  it("enters complete when the backend reports completion", () => {
    const state = onProgressLoaded(
      INITIAL_STATE,
      progress({ status: "complete", image_id: null, image_url: null, graded: 20 }),
    );
    expect(state.phase).toBe("complete");
  });

  it("a quality key starts a submission for the current image", () => {
    const grading = onProgressLoaded(INITIAL_STATE, progress());
    const submitting = onQualityKey(grading, "adequate");
    expect(submitting.phase).toBe("submitting");
    expect(submitting.pending).toEqual({ imageId: "img_000", quality: "adequate" });
  });

  it("ignores a second keystroke while a submission is pending", () => {
    const grading = onProgressLoaded(INITIAL_STATE, progress());
    const submitting = onQualityKey(grading, "adequate");
    const again = onQualityKey(submitting, "good");
    expect(again).toBe(submitting);
  });

  it("ignores quality keys while loading or complete", () => {
    expect(onQualityKey(INITIAL_STATE, "good")).toBe(INITIAL_STATE);
    const complete = onProgressLoaded(
      INITIAL_STATE,
      progress({ status: "complete", image_id: null }),
    );
    expect(onQualityKey(complete, "good")).toBe(complete);
  });

  it("acknowledgment advances to the next image and clears pending", () => {
    const grading = onProgressLoaded(INITIAL_STATE, progress());
    const submitting = onQualityKey(grading, "good");
    const next = onSubmitAccepted(
      submitting,
      progress({ image_id: "img_001", image_url: "/image/img_001", graded: 1 }),
    );
    expect(next.phase).toBe("grading");
    expect(next.pending).toBeNull();
    expect(next.progress?.image_id).toBe("img_001");
  });

  it("failure keeps the pending judgment for retry — no keystroke loss", () => {
    const grading = onProgressLoaded(INITIAL_STATE, progress());
    const submitting = onQualityKey(grading, "insufficient");
    const failed = onSubmitFailed(submitting, "backend unreachable");
    expect(failed.phase).toBe("error");
    expect(failed.pending).toEqual({ imageId: "img_000", quality: "insufficient" });
    expect(failed.errorMessage).toContain("unreachable");

    const retrying = onRetry(failed);
    expect(retrying.phase).toBe("submitting");
    expect(retrying.pending).toEqual(failed.pending);
  });

  it("retry without a pending judgment falls back to reloading", () => {
    const failed = onLoadFailed(INITIAL_STATE, "down");
    const retrying = onRetry(failed);
    expect(retrying.phase).toBe("loading");
  });

  it("undo is only available while grading or complete", () => {
    const grading = onProgressLoaded(INITIAL_STATE, progress());
    expect(onUndoRequested(grading).phase).toBe("submitting");
    const submitting = onQualityKey(grading, "good");
    expect(onUndoRequested(submitting)).toBe(submitting);
  });
});
