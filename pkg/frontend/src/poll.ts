/** Repeats an async task on an interval, never overlapping in-flight
 * calls (a slow response just delays the next round). */
export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  constructor(private task: () => Promise<void>, private intervalMs: number) {}

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get running(): boolean {
    return this.timer !== null;
  }

  async tick(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.task();
    } catch {
      /* the task surfaces its own errors; polling keeps going */
    } finally {
      this.inFlight = false;
    }
  }
}
