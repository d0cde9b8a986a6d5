import { Quality, QUALITIES } from "./types.js";

/**
 * Keyboard-first bindings: number keys map one-to-one onto quality levels,
 * plus an undo key and a retry key. Grading tens of thousands of images
 * means every judgment must be a single keystroke.
 */
export const QUALITY_KEYS: ReadonlyMap<string, Quality> = new Map(
  QUALITIES.map((quality, index) => [String(index + 1), quality]),
);

export const UNDO_KEY = "u";
export const RETRY_KEY = "r";

export function qualityForKey(key: string): Quality | null {
  return QUALITY_KEYS.get(key) ?? null;
}

export function describeKeymap(): string {
  const parts = [...QUALITY_KEYS.entries()].map(([key, q]) => `${key}=${q}`);
  parts.push(`${UNDO_KEY}=undo`, `${RETRY_KEY}=retry`);
  return parts.join("  ");
}
