import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { INITIAL_DELAY_MS, MAX_DELAY_MS, SessionPoller } from "../src/poller.js";

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("SessionPoller", () => {
  it("backs off geometrically and caps at 5 seconds", async () => {
    const tick = vi.fn().mockResolvedValue(true);
    const poller = new SessionPoller(tick);
    poller.start();
    await vi.advanceTimersByTimeAsync(120_000);
    poller.stop();
    expect(poller.delaysUsed[0]).toBe(INITIAL_DELAY_MS);
    expect(Math.max(...poller.delaysUsed)).toBe(MAX_DELAY_MS);
    for (const delay of poller.delaysUsed) {
      expect(delay).toBeLessThanOrEqual(MAX_DELAY_MS);
    }
  });

  it("never storms the server: bounded request count per minute", async () => {
    const tick = vi.fn().mockResolvedValue(true);
    const poller = new SessionPoller(tick);
    poller.start();
    await vi.advanceTimersByTimeAsync(60_000);
    poller.stop();
    // backoff 500ms * 1.5^k capped at 5s admits ~15 polls in the first minute
    expect(tick.mock.calls.length).toBeLessThanOrEqual(16);
    expect(tick.mock.calls.length).toBeGreaterThanOrEqual(10);
  });

  it("stops when the tick reports a terminal state", async () => {
    const tick = vi.fn().mockResolvedValueOnce(true).mockResolvedValueOnce(false);
    const poller = new SessionPoller(tick);
    poller.start();
    await vi.advanceTimersByTimeAsync(60_000);
    expect(tick).toHaveBeenCalledTimes(2);
  });

  it("keeps polling through transient fetch failures", async () => {
    const tick = vi
      .fn()
      .mockRejectedValueOnce(new Error("network blip"))
      .mockResolvedValue(true);
    const poller = new SessionPoller(tick);
    poller.start();
    await vi.advanceTimersByTimeAsync(10_000);
    poller.stop();
    expect(tick.mock.calls.length).toBeGreaterThan(2);
  });

  it("does not schedule after stop()", async () => {
    const tick = vi.fn().mockResolvedValue(true);
    const poller = new SessionPoller(tick);
    poller.start();
    await vi.advanceTimersByTimeAsync(2_000);
    poller.stop();
    const calls = tick.mock.calls.length;
    await vi.advanceTimersByTimeAsync(60_000);
    expect(tick.mock.calls.length).toBe(calls);
  });
});
