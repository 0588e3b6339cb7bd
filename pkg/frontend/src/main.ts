// Entry point: bind the console to the session named in the URL, or show
// a minimal create-session form.

import { ApiClient } from "./api.js";
import { AnnotationConsole, ConsoleElements } from "./app.js";

function grab(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

export function collectElements(): ConsoleElements {
  return {
    question: grab("question"),
    yes: grab("yes") as HTMLButtonElement,
    no: grab("no") as HTMLButtonElement,
    budget: grab("budget"),
    tree: grab("tree"),
    marginals: grab("marginals"),
    history: grab("history"),
    banner: grab("banner"),
    completion: grab("completion"),
    panelStatus: grab("panel-status"),
  };
}

async function createFromForm(api: string): Promise<void> {
  const concepts = (grab("concepts") as HTMLTextAreaElement).value
    .split(/[\n,]/)
    .map((c) => c.trim())
    .filter((c) => c.length > 0);
  const budget = Number((grab("new-budget") as HTMLInputElement).value) || 50;
  const client = new ApiClient(api, "");
  const created = await client.createSession({ concepts, budget }, api);
  const target = new URL(window.location.href);
  target.searchParams.set("session", created.id);
  window.location.href = target.toString();
}

export async function bootstrap(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = params.get("api") ?? "";
  const sessionId = params.get("session");
  const mode = params.get("mode") === "panel" ? "panel" : "single";

  if (!sessionId) {
    grab("setup").classList.add("visible");
    grab("create").addEventListener("click", () => void createFromForm(api));
    return;
  }
  grab("console").classList.add("visible");
  const client = new ApiClient(api, sessionId);
  const app = new AnnotationConsole(client, collectElements(), mode);
  await app.start();
}

if (typeof window !== "undefined" && !("__HIERLEARN_TEST__" in globalThis)) {
  void bootstrap();
}
