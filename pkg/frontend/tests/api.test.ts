import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { FakeService } from "./fake_service.js";

describe("ApiClient", () => {
  it("fetches questions and reports from the service", async () => {
    const service = new FakeService();
    const client = new ApiClient("http://x", "s1", service.fetch);
    const q = await client.nextQuestion();
    expect(q.exhausted).toBe(false);
    expect(q.text).toContain("apple");
    const report = await client.report();
    expect(report.threshold).toBe(0.75);
    expect(service.requests.map((r) => r.path)).toEqual([
      "/sessions/s1/next-question",
      "/sessions/s1/report",
    ]);
  });

  it("submits votes and resolves with the acknowledgment", async () => {
    const service = new FakeService();
    const client = new ApiClient("http://x", "s1", service.fetch);
    const result = await client.submitVotes({ kind: "path", i: 2, j: 1, votes: [1] });
    expect(result.answer).toBe(1);
    expect(service.votePosts).toBe(1);
    expect(client.pendingVotes).toBe(0);
  });

  it("keeps votes queued across network failures and retries them", async () => {
    const service = new FakeService();
    service.failNextVotes = 2;
    const client = new ApiClient("http://x", "s1", service.fetch);
    const states: boolean[] = [];
    const result = await client.submitVotes(
      { kind: "path", i: 2, j: 1, votes: [1] },
      (up) => states.push(up),
    );
    expect(result.applied).toBe(true);
    expect(service.votePosts).toBe(1); // acknowledged exactly once
    expect(states).toContain(false); // the retry banner saw the outage
    expect(states[states.length - 1]).toBe(true);
    expect(client.pendingVotes).toBe(0);
  });

  it("rejects on a server verdict without re-posting", async () => {
    const service = new FakeService();
    const client = new ApiClient("http://x", "s1", service.fetch);
    const bad = client.submitVotes({ kind: "bogus", i: 0, j: 0, votes: [] });
    // FakeService only handles /votes generically; emulate a 4xx verdict
    service.fetch = async () =>
      new Response(JSON.stringify({ detail: "nope" }), { status: 422 });
    await expect(
      new ApiClient("http://x", "s1", service.fetch).submitVotes({
        kind: "path",
        i: 1,
        j: 2,
        votes: [1],
      }),
    ).rejects.toBeInstanceOf(ApiError);
    await bad; // the first legal post still resolves
  });

  it("creates sessions", async () => {
    const service = new FakeService();
    const client = new ApiClient("http://x", "", service.fetch);
    const created = await client.createSession({ concepts: ["a", "b"], budget: 9 });
    expect(created.id).toBe("created");
  });
});
