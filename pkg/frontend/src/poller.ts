/**
 * Session polling with exponential backoff capped at 5 seconds:
 * sessions change state a handful of times, so polling stays gentle and
 * can never storm the server.
 */

export const INITIAL_DELAY_MS = 500;
export const BACKOFF_FACTOR = 1.5;
export const MAX_DELAY_MS = 5000;

export type Scheduler = (fn: () => void, delayMs: number) => unknown;

export class SessionPoller {
  private delayMs = INITIAL_DELAY_MS;
  private stopped = false;
  readonly delaysUsed: number[] = [];

  constructor(
    private readonly tick: () => Promise<boolean>, // true = keep polling
    private readonly schedule: Scheduler = (fn, ms) => setTimeout(fn, ms)
  ) {}

  start(): void {
    this.scheduleNext();
  }

  stop(): void {
    this.stopped = true;
  }

  private scheduleNext(): void {
    if (this.stopped) {
      return;
    }
    const delay = this.delayMs;
    this.delaysUsed.push(delay);
    this.schedule(() => {
      void this.run();
    }, delay);
    this.delayMs = Math.min(this.delayMs * BACKOFF_FACTOR, MAX_DELAY_MS);
  }

  private async run(): Promise<void> {
    if (this.stopped) {
      return;
    }
    let keepGoing = false;
    try {
      keepGoing = await this.tick();
    } catch {
      keepGoing = true; // transient fetch errors: keep backing off
    }
    if (keepGoing) {
      this.scheduleNext();
    } else {
      this.stopped = true;
    }
  }
}
