/**
 * Session polling with exponential backoff capped at 5 seconds:
 * sessions change state a handful of times, so polling stays gentle and
 * can never storm the server.
 */
export const INITIAL_DELAY_MS = 500;
export const BACKOFF_FACTOR = 1.5;
export const MAX_DELAY_MS = 5000;
export class SessionPoller {
    constructor(tick, // true = keep polling
    schedule = (fn, ms) => setTimeout(fn, ms)) {
        this.tick = tick;
        this.schedule = schedule;
        this.delayMs = INITIAL_DELAY_MS;
        this.stopped = false;
        this.delaysUsed = [];
    }
    start() {
        this.scheduleNext();
    }
    stop() {
        this.stopped = true;
    }
    scheduleNext() {
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
    async run() {
        if (this.stopped) {
            return;
        }
        let keepGoing = false;
        try {
            keepGoing = await this.tick();
        }
        catch {
            keepGoing = true; // transient fetch errors: keep backing off
        }
        if (keepGoing) {
            this.scheduleNext();
        }
        else {
            this.stopped = true;
        }
    }
}
