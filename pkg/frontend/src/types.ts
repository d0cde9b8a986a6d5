export type Quality = "excellent" | "good" | "adequate" | "insufficient";

export const QUALITIES: Quality[] = ["excellent", "good", "adequate", "insufficient"];

/** Progress payload returned by every backend endpoint. */
export interface SessionProgress {
  status: "in_progress" | "complete";
  session_id: string;
  image_id: string | null;
  image_url: string | null;
  graded: number;
  remaining: number;
  total: number;
  instructions: string;
  qualities: string[];
}
