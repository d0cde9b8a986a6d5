import { Quality, SessionProgress } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
  ) {
    super(message);
  }
}

/** Thin client for the grading backend; all endpoints return progress. */
export class GradingApi {
  constructor(
    private readonly sessionId: string,
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async next(): Promise<SessionProgress> {
    return this.request(`/session/${this.sessionId}/next`, { method: "GET" });
  }

  async submitGrade(imageId: string, quality: Quality): Promise<SessionProgress> {
    return this.request(`/session/${this.sessionId}/grade`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_id: imageId, quality }),
    });
  }

  async undo(): Promise<SessionProgress> {
    return this.request(`/session/${this.sessionId}/undo`, { method: "POST" });
  }

  imageUrl(progress: SessionProgress): string | null {
    return progress.image_url ? `${this.baseUrl}${progress.image_url}` : null;
  }

  private async request(path: string, init: RequestInit): Promise<SessionProgress> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(`backend unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") {
          detail = body.detail;
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as SessionProgress;
  }
}
