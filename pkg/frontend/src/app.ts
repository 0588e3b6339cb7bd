// The annotation loop: show the active question, take yes/no input,
// submit votes, refresh the tree. Input stays disabled while an update
// is in flight, so double clicks cannot double-submit.

import { ApiClient, NextQuestion, Report, VoteResult } from "./api.js";
import { renderMarginalTable, renderTree } from "./tree_view.js";

export interface ConsoleElements {
  question: HTMLElement;
  yes: HTMLButtonElement;
  no: HTMLButtonElement;
  budget: HTMLElement;
  tree: HTMLElement;
  marginals: HTMLElement;
  history: HTMLElement;
  banner: HTMLElement;
  completion: HTMLElement;
  panelStatus: HTMLElement;
}

export type AnnotationMode = "single" | "panel";

export class AnnotationConsole {
  private current: NextQuestion | null = null;
  private inFlight = false;
  private panelVotes: number[] = [];
  private votesPerQuestion = 1;
  private lastPair: { i: number; j: number } | null = null;
  private lastReport: Report | null = null;

  constructor(
    private api: ApiClient,
    private el: ConsoleElements,
    private mode: AnnotationMode = "single",
  ) {
    el.yes.addEventListener("click", () => void this.answer(1));
    el.no.addEventListener("click", () => void this.answer(0));
  }

  get report(): Report | null {
    return this.lastReport;
  }

  async start(): Promise<void> {
    const info = await this.api.sessionInfo();
    this.votesPerQuestion = this.mode === "panel" ? info.votes_per_question : 1;
    await this.refreshReport();
    await this.advance();
  }

  private setBusy(busy: boolean): void {
    this.inFlight = busy;
    this.el.yes.disabled = busy || this.current === null;
    this.el.no.disabled = busy || this.current === null;
  }

  private async refreshReport(): Promise<void> {
    this.lastReport = await this.api.report();
    renderTree(this.lastReport, this.el.tree);
    renderMarginalTable(this.lastReport, this.lastPair, this.el.marginals);
  }

  private async advance(): Promise<void> {
    const q = await this.api.nextQuestion();
    if (q.exhausted) {
      this.current = null;
      this.setBusy(false);
      this.showCompletion();
      return;
    }
    this.current = q;
    this.el.question.textContent = q.text ?? "";
    this.el.budget.textContent = `${q.remaining_budget} questions left`;
    this.panelVotes = [];
    this.updatePanelStatus();
    this.setBusy(false);
  }

  private updatePanelStatus(): void {
    if (this.votesPerQuestion <= 1) {
      this.el.panelStatus.textContent = "";
      return;
    }
    this.el.panelStatus.textContent =
      `${this.panelVotes.length}/${this.votesPerQuestion} panel votes collected`;
  }

  // One accepted click = at most one eventual POST; clicks while a
  // submission is in flight are dropped.
  async answer(vote: 0 | 1): Promise<VoteResult | null> {
    if (this.inFlight || this.current === null) return null;
    this.panelVotes.push(vote);
    this.updatePanelStatus();
    if (this.panelVotes.length < this.votesPerQuestion) return null;

    const q = this.current;
    const votes = this.panelVotes;
    this.panelVotes = [];
    this.setBusy(true);
    try {
      const result = await this.api.submitVotes(
        { kind: q.kind!, i: q.i!, j: q.j!, votes },
        (up) => this.el.banner.classList.toggle("visible", !up),
      );
      this.el.banner.classList.remove("visible");
      this.lastPair = { i: q.i!, j: q.j! };
      this.appendHistory(q, result);
      await this.refreshReport();
      await this.advance();
      return result;
    } catch (err) {
      this.el.banner.textContent = `vote rejected: ${String(err)}`;
      this.el.banner.classList.add("visible");
      this.setBusy(false);
      throw err;
    }
  }

  private appendHistory(q: NextQuestion, result: VoteResult): void {
    const item = document.createElement("li");
    const verdict = result.tie
      ? "tie, skipped"
      : `answer ${result.answer === 1 ? "yes" : "no"} (gamma ${result.gamma.toFixed(3)})`;
    item.textContent = `${q.text} -> ${verdict}`;
    this.el.history.prepend(item);
  }

  private showCompletion(): void {
    this.el.question.textContent = "All questions answered.";
    this.el.budget.textContent = "0 questions left";
    this.el.completion.classList.add("visible");
    if (this.lastReport) {
      const payload = encodeURIComponent(JSON.stringify(this.lastReport.map_tree));
      this.el.completion.innerHTML =
        `<p>Session complete.</p>` +
        `<a download="map_tree.json" href="data:application/json,${payload}">` +
        `Download final MAP tree</a>`;
    }
  }
}
