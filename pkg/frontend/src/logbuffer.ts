import type { LogLine, LogPage } from "./types.js";

/** Accumulates polled log pages, guaranteeing monotone, duplicate-free
 * output even if a page overlaps or arrives twice. */
export class LogBuffer {
  private entries: LogLine[] = [];
  private seen = 0; // highest seq ingested

  get cursor(): number {
    return this.seen;
  }

  get lines(): readonly LogLine[] {
    return this.entries;
  }

  /** Returns only the lines that were actually new. */
  ingest(page: LogPage): LogLine[] {
    const fresh = page.lines
      .filter((line) => line.seq > this.seen)
      .sort((a, b) => a.seq - b.seq);
    for (const line of fresh) {
      this.entries.push(line);
      this.seen = line.seq;
    }
    return fresh;
  }

  clear(): void {
    this.entries = [];
    this.seen = 0;
  }
}
