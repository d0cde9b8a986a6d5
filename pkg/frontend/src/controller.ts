import { GradingApi } from "./api.js";
import { qualityForKey, RETRY_KEY, UNDO_KEY } from "./keymap.js";
import {
  INITIAL_STATE,
  onLoadFailed,
  onProgressLoaded,
  onQualityKey,
  onRetry,
  onSubmitAccepted,
  onSubmitFailed,
  onUndoRequested,
  UiState,
} from "./state.js";

/**
 * Drives the state machine against the backend. One controller instance
 * serializes its network activity: a new keystroke while a request is in
 * flight is dropped by the state machine, never queued twice.
 */
export class GradingController {
  private state: UiState = INITIAL_STATE;

  constructor(
    private readonly api: GradingApi,
    private readonly render: (state: UiState) => void,
  ) {}

  getState(): UiState {
    return this.state;
  }

  private setState(state: UiState): void {
    this.state = state;
    this.render(state);
  }

  /** Initial load, and the resume path after a page refresh. */
  async start(): Promise<void> {
    try {
      this.setState(onProgressLoaded(this.state, await this.api.next()));
    } catch (err) {
      this.setState(onLoadFailed(this.state, String(err)));
    }
  }

  async handleKey(key: string): Promise<void> {
    const quality = qualityForKey(key);
    if (quality) {
      const before = this.state;
      const after = onQualityKey(before, quality);
      if (after === before) {
        return; // ignored: submission already pending or nothing to grade
      }
      this.setState(after);
      await this.flushPending();
      return;
    }
    if (key === UNDO_KEY) {
      await this.undo();
      return;
    }
    if (key === RETRY_KEY && this.state.phase === "error") {
      await this.retry();
    }
  }

  private async flushPending(): Promise<void> {
    const pending = this.state.pending;
    if (!pending) {
      return;
    }
    try {
      const progress = await this.api.submitGrade(pending.imageId, pending.quality);
      this.setState(onSubmitAccepted(this.state, progress));
    } catch (err) {
      this.setState(onSubmitFailed(this.state, String(err)));
    }
  }

  private async undo(): Promise<void> {
    const before = this.state;
    const after = onUndoRequested(before);
    if (after === before) {
      return;
    }
    this.setState(after);
    try {
      this.setState(onProgressLoaded(this.state, await this.api.undo()));
    } catch (err) {
      // nothing to undo is not an error worth blocking on; reload progress
      try {
        this.setState(onProgressLoaded(this.state, await this.api.next()));
      } catch (inner) {
        this.setState(onLoadFailed(this.state, String(inner)));
      }
    }
  }

  private async retry(): Promise<void> {
    const after = onRetry(this.state);
    this.setState(after);
    if (after.phase === "submitting") {
      await this.flushPending();
    } else if (after.phase === "loading") {
      await this.start();
    }
  }
}
