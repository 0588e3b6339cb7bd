// Typed client for the session service. The console never derives
// posterior quantities itself; everything displayed comes from these
// responses. Vote submissions go through a client-side queue so a flaky
// connection loses nothing: a vote is dropped only once acknowledged.

export interface NextQuestion {
  exhausted: boolean;
  kind?: string;
  i?: number;
  j?: number;
  i_label?: string;
  j_label?: string;
  text?: string;
  remaining_budget?: number;
}

export interface VoteResult {
  answer: number;
  gamma: number;
  tie: boolean;
  applied: boolean;
  remaining_budget: number;
  ess: number | null;
}

export interface UncertainNode {
  node: number;
  label: string;
  map_parent: number;
  map_parent_label: string;
  marginal: number;
  second_parent: number;
  second_parent_label: string;
  second_marginal: number;
}

export interface Report {
  map_tree: { n: number; parents: number[] };
  marginals: number[][];
  uncertain: UncertainNode[];
  threshold: number;
  labels: string[];
}

export interface SessionInfo {
  id: string;
  concepts: string[];
  root_label: string;
  budget: number;
  answered: number;
  votes_per_question: number;
  uncertainty_threshold: number;
  question_template: string;
}

export interface PendingVote {
  kind: string;
  i: number;
  j: number;
  votes: number[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    const body = await response.text();
    throw new ApiError(response.status, body || response.statusText);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  private queue: PendingVote[] = [];
  private flushing = false;

  constructor(
    readonly baseUrl: string,
    readonly sessionId: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/sessions/${this.sessionId}${path}`;
  }

  async createSession(body: object, baseUrl = this.baseUrl): Promise<{ id: string }> {
    const response = await this.fetchImpl(`${baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return asJson(response);
  }

  async sessionInfo(): Promise<SessionInfo> {
    return asJson(await this.fetchImpl(this.url("")));
  }

  async nextQuestion(): Promise<NextQuestion> {
    return asJson(await this.fetchImpl(this.url("/next-question")));
  }

  async report(): Promise<Report> {
    return asJson(await this.fetchImpl(this.url("/report")));
  }

  async insertConcept(label: string): Promise<{ n: number; concepts: string[] }> {
    const response = await this.fetchImpl(this.url("/concepts"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label }),
    });
    return asJson(response);
  }

  async importContent(content: string): Promise<{ imported: number }> {
    const response = await this.fetchImpl(this.url("/import"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ content }),
    });
    return asJson(response);
  }

  get pendingVotes(): number {
    return this.queue.length;
  }

  // Queues the vote and flushes the queue in order. Resolves with the
  // server acknowledgment of THIS vote; rejects only on a non-retryable
  // server verdict (4xx/5xx). Network failures keep the vote queued and
  // surface through onConnectionChange until a later flush succeeds.
  submitVotes(
    vote: PendingVote,
    onConnectionChange?: (up: boolean) => void,
  ): Promise<VoteResult> {
    this.queue.push(vote);
    return new Promise((resolve, reject) => {
      const attempt = async () => {
        if (this.flushing) {
          setTimeout(attempt, 25);
          return;
        }
        this.flushing = true;
        try {
          while (this.queue.length > 0 && this.queue[0] !== vote) {
            await this.postVote(this.queue[0]);
            this.queue.shift();
          }
          const result = await this.postVote(vote);
          this.queue.shift();
          onConnectionChange?.(true);
          resolve(result);
        } catch (err) {
          if (err instanceof ApiError) {
            // the server answered: the vote is invalid, not lost
            const at = this.queue.indexOf(vote);
            if (at >= 0) this.queue.splice(at, 1);
            reject(err);
          } else {
            onConnectionChange?.(false);
            setTimeout(attempt, 500);
          }
        } finally {
          this.flushing = false;
        }
      };
      attempt();
    });
  }

  private async postVote(vote: PendingVote): Promise<VoteResult> {
    const response = await this.fetchImpl(this.url("/votes"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(vote),
    });
    return asJson(response);
  }
}
