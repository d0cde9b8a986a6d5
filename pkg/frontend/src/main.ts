import { GradingApi } from "./api.js";
import { GradingController } from "./controller.js";
import { findViewElements, renderState } from "./view.js";

export interface AppHandle {
  controller: GradingController;
  /** Detach the key listener; a page unload does this implicitly. */
  dispose: () => void;
}

export function mountApp(root: Document, sessionId = "default", baseUrl = ""): AppHandle {
  const api = new GradingApi(sessionId, baseUrl);
  const els = findViewElements(root);
  const controller = new GradingController(api, (state) => renderState(els, api, state));
  const abort = new AbortController();
  root.addEventListener(
    "keydown",
    (event) => {
      void controller.handleKey((event as KeyboardEvent).key);
    },
    { signal: abort.signal },
  );
  void controller.start();
  return { controller, dispose: () => abort.abort() };
}

declare global {
  interface Window {
    __gradingApp?: AppHandle;
  }
}

if (typeof document !== "undefined" && document.getElementById("fundus-image")) {
  const params = new URLSearchParams(window.location.search);
  window.__gradingApp = mountApp(document, params.get("session") ?? "default");
}
