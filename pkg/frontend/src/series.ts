import type { Observation } from "./types.js";

export interface Series {
  /** x values: offset within the run, in seconds */
  x: number[];
  /** y values in metric units */
  y: number[];
}

/** Numeric time series for charting: one point per offset_ms sample,
 * sorted by offset, non-numeric and offset-less observations dropped. */
export function bandwidthSeries(observations: Observation[]): Series {
  const points = observations
    .filter((o) => typeof o.value === "number" && o.offset_ms !== null)
    .map((o) => ({ x: (o.offset_ms as number) / 1000, y: o.value as number }))
    .sort((a, b) => a.x - b.x);
  return { x: points.map((p) => p.x), y: points.map((p) => p.y) };
}

export function seriesSummary(series: Series): { mean: number; min: number; max: number } | null {
  if (series.y.length === 0) return null;
  const sum = series.y.reduce((a, b) => a + b, 0);
  return {
    mean: sum / series.y.length,
    min: Math.min(...series.y),
    max: Math.max(...series.y),
  };
}
