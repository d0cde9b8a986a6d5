import { SessionProgress } from "../src/types.js";

export interface GradeRow {
  imageId: string;
  quality: string;
}

/**
 * In-memory stand-in for the grading backend with the same cursor and
 * append-only semantics; `restart()` simulates a process kill by rebuilding
 * the session view from the persisted rows, exactly like the real reload.
 */
export class FakeBackend {
  rows: GradeRow[] = [];
  failNextRequests = 0;
  private graded = new Set<string>();
  private cursor = 0;

  constructor(
    readonly sessionId: string,
    private readonly imageIds: string[],
  ) {}

  restart(): void {
    this.graded = new Set(this.rows.map((r) => r.imageId));
    this.cursor = 0;
    this.advance();
  }

  private advance(): void {
    while (this.cursor < this.imageIds.length && this.graded.has(this.imageIds[this.cursor])) {
      this.cursor += 1;
    }
  }

  private progress(): SessionProgress {
    const current = this.cursor < this.imageIds.length ? this.imageIds[this.cursor] : null;
    return {
      status: current === null ? "complete" : "in_progress",
      session_id: this.sessionId,
      image_id: current,
      image_url: current ? `/image/${current}` : null,
      graded: this.graded.size,
      remaining: this.imageIds.length - this.cursor,
      total: this.imageIds.length,
      instructions: "judge photographic quality",
      qualities: ["excellent", "good", "adequate", "insufficient"],
    };
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    if (this.failNextRequests > 0) {
      this.failNextRequests -= 1;
      throw new TypeError("NetworkError: connection refused");
    }
    const grade = url.match(/\/session\/([^/]+)\/grade$/);
    if (grade && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as { image_id: string; quality: string };
      const expected = this.imageIds[this.cursor];
      if (body.image_id !== expected) {
        return json(409, { detail: `expected grade for ${expected}` });
      }
      if (!["excellent", "good", "adequate", "insufficient"].includes(body.quality)) {
        return json(422, { detail: `unknown quality ${body.quality}` });
      }
      this.rows.push({ imageId: body.image_id, quality: body.quality });
      this.graded.add(body.image_id);
      this.cursor += 1;
      this.advance();
      return json(200, this.progress());
    }
    if (/\/session\/[^/]+\/next$/.test(url)) {
      return json(200, this.progress());
    }
    if (/\/session\/[^/]+\/undo$/.test(url) && init?.method === "POST") {
      for (let i = Math.min(this.cursor, this.imageIds.length) - 1; i >= 0; i -= 1) {
        const id = this.imageIds[i];
        if (this.graded.has(id)) {
          this.graded.delete(id);
          this.cursor = i;
          return json(200, this.progress());
        }
      }
      return json(409, { detail: "nothing to undo" });
    }
    if (/\/image\//.test(url)) {
      return new Response(new Uint8Array([137, 80, 78, 71]), {
        status: 200,
        headers: { "content-type": "image/png" },
      });
    }
    return json(404, { detail: `no route for ${url}` });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
