import { Quality, SessionProgress } from "./types.js";

/**
 * Pure grading-session state machine. All transitions are synchronous and
 * side-effect free; the controller performs the network calls and feeds the
 * outcomes back in. Invariants: at most one submission in flight, and a
 * pending judgment is never dropped on failure (it survives into the error
 * state for retry).
 */

export type Phase = "loading" | "grading" | "submitting" | "error" | "complete";

export interface PendingSubmit {
  imageId: string;
  quality: Quality;
}

export interface UiState {
  phase: Phase;
  progress: SessionProgress | null;
  pending: PendingSubmit | null;
  errorMessage: string | null;
}

export const INITIAL_STATE: UiState = {
  phase: "loading",
  progress: null,
  pending: null,
  errorMessage: null,
};

export function onProgressLoaded(state: UiState, progress: SessionProgress): UiState {
  const phase = progress.status === "complete" ? "complete" : "grading";
  return { phase, progress, pending: null, errorMessage: null };
}

export function onLoadFailed(state: UiState, message: string): UiState {
  return { ...state, phase: "error", errorMessage: message };
}

/**
 * A quality keystroke starts a submission for the current image; the key is
 * ignored while another submission is pending or no image is shown.
 */
export function onQualityKey(state: UiState, quality: Quality): UiState {
  if (state.phase !== "grading" || !state.progress || !state.progress.image_id) {
    return state;
  }
  return {
    ...state,
    phase: "submitting",
    pending: { imageId: state.progress.image_id, quality },
  };
}

export function onSubmitAccepted(state: UiState, progress: SessionProgress): UiState {
  return onProgressLoaded(state, progress);
}

/** Submission failed: keep the judgment, surface a visible retry state. */
export function onSubmitFailed(state: UiState, message: string): UiState {
  if (state.phase !== "submitting") {
    return state;
  }
  return { ...state, phase: "error", errorMessage: message };
}

/** Retry re-enters submitting with the retained judgment, if any. */
export function onRetry(state: UiState): UiState {
  if (state.phase !== "error") {
    return state;
  }
  if (state.pending) {
    return { ...state, phase: "submitting", errorMessage: null };
  }
  return { ...state, phase: "loading", errorMessage: null };
}

export function onUndoRequested(state: UiState): UiState {
  if (state.phase !== "grading" && state.phase !== "complete") {
    return state;
  }
  return { ...state, phase: "submitting", pending: null };
}
