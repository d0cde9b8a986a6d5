import { GradingApi } from "./api.js";
import { describeKeymap } from "./keymap.js";
import { UiState } from "./state.js";

const UNGRADABLE_GUIDANCE =
  "Mark an image insufficient when it cannot be interpreted: out of focus, " +
  "underexposed, or overexposed.";

export interface ViewElements {
  image: HTMLImageElement;
  progressBar: HTMLElement;
  progressText: HTMLElement;
  statusText: HTMLElement;
  instructions: HTMLElement;
  keymap: HTMLElement;
}

export function findViewElements(root: Document): ViewElements {
  const get = (id: string): HTMLElement => {
    const el = root.getElementById(id);
    if (!el) {
      throw new Error(`missing element #${id}`);
    }
    return el;
  };
  return {
    image: get("fundus-image") as HTMLImageElement,
    progressBar: get("progress-bar"),
    progressText: get("progress-text"),
    statusText: get("status-text"),
    instructions: get("instructions"),
    keymap: get("keymap"),
  };
}

export function renderState(els: ViewElements, api: GradingApi, state: UiState): void {
  els.keymap.textContent = describeKeymap();
  const progress = state.progress;
  if (progress) {
    const pct = progress.total > 0 ? (100 * progress.graded) / progress.total : 0;
    els.progressBar.style.width = `${pct.toFixed(1)}%`;
    els.progressText.textContent = `${progress.graded} / ${progress.total} graded`;
    els.instructions.textContent = `${progress.instructions} ${UNGRADABLE_GUIDANCE}`;
  }
  switch (state.phase) {
    case "loading":
      els.statusText.textContent = "Loading session…";
      break;
    case "grading": {
      const url = progress ? api.imageUrl(progress) : null;
      if (url && els.image.getAttribute("src") !== url) {
        els.image.setAttribute("src", url);
      }
      els.image.hidden = false;
      els.statusText.textContent = progress?.image_id ?? "";
      break;
    }
    case "submitting":
      els.statusText.textContent = "Submitting…";
      break;
    case "error":
      els.statusText.textContent = `Backend error: ${state.errorMessage} — press r to retry`;
      break;
    case "complete":
      els.image.hidden = true;
      els.statusText.textContent = progress
        ? `Session complete: ${progress.graded} of ${progress.total} images graded.`
        : "Session complete.";
      break;
  }
}
