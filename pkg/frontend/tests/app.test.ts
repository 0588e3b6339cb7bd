// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AnnotationConsole, ConsoleElements } from "../src/app.js";
import { FakeService } from "./fake_service.js";

function buildDom(): ConsoleElements {
  document.body.innerHTML = `
    <p id="question"></p>
    <button id="yes"></button>
    <button id="no"></button>
    <span id="budget"></span>
    <div id="tree"></div>
    <div id="marginals"></div>
    <ul id="history"></ul>
    <div id="banner"></div>
    <div id="completion"></div>
    <p id="panel-status"></p>
  `;
  const grab = (id: string) => document.getElementById(id)!;
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

describe("AnnotationConsole", () => {
  let service: FakeService;
  let el: ConsoleElements;
  let app: AnnotationConsole;

  beforeEach(() => {
    service = new FakeService(3);
    el = buildDom();
    app = new AnnotationConsole(
      new ApiClient("http://x", "s1", service.fetch),
      el,
      "single",
    );
  });

  it("shows the first question and the rendered tree after start", async () => {
    await app.start();
    expect(el.question.textContent).toBe("Is apple a type of fruit?");
    expect(el.budget.textContent).toContain("3");
    expect(el.tree.querySelectorAll("span.node").length).toBe(4);
    expect(el.yes.disabled).toBe(false);
  });

  it("an answered question produces exactly one vote POST", async () => {
    await app.start();
    const result = await app.answer(1);
    expect(result!.answer).toBe(1);
    expect(service.votePosts).toBe(1);
    expect(el.history.children.length).toBe(1);
    expect(el.history.textContent).toContain("answer yes");
  });

  it("double clicks while in flight do not double-submit", async () => {
    await app.start();
    const first = app.answer(1);
    const second = app.answer(1); // fired while the first is in flight
    const [a, b] = await Promise.all([first, second]);
    expect(service.votePosts).toBe(1);
    expect(a).not.toBeNull();
    expect(b).toBeNull();
  });

  it("every displayed number comes from a service response", async () => {
    await app.start();
    await app.answer(0);
    // marginal table shows exactly the server-sent column values
    const cells = Array.from(
      el.marginals.querySelectorAll("table tr td:nth-child(2)"),
    ).map((c) => c.textContent);
    expect(cells.slice(1)).toEqual(["0.800", "0.100", "0.100"]);
    // budget label mirrors remaining_budget from the service
    expect(el.budget.textContent).toBe("2 questions left");
  });

  it("reaching budget zero shows the completion screen with an export link", async () => {
    service.budget = 1;
    await app.start();
    await app.answer(1);
    expect(el.completion.classList.contains("visible")).toBe(true);
    expect(el.completion.querySelector("a")!.getAttribute("download")).toBe(
      "map_tree.json",
    );
    expect(el.yes.disabled).toBe(true);
  });

  it("panel mode collects the configured number of votes before posting", async () => {
    app = new AnnotationConsole(
      new ApiClient("http://x", "s1", service.fetch),
      el,
      "panel",
    );
    await app.start();
    await app.answer(1);
    await app.answer(0);
    expect(service.votePosts).toBe(0);
    expect(el.panelStatus.textContent).toContain("2/3");
    await app.answer(1);
    expect(service.votePosts).toBe(1);
    const posted = service.requests.findLast((r) => r.path.endsWith("/votes"));
    expect((posted!.body as { votes: number[] }).votes).toEqual([1, 0, 1]);
  });

  it("shows the retry banner during an outage and clears it after recovery", async () => {
    await app.start();
    service.failNextVotes = 1;
    await app.answer(1);
    expect(service.votePosts).toBe(1); // vote survived the outage
    expect(el.banner.classList.contains("visible")).toBe(false);
  });
});
