import type { Series } from "./series.js";

export interface ChartOptions {
  width: number;
  height: number;
  xLabel: string;
  yLabel: string;
}

const PAD = { left: 56, right: 12, top: 12, bottom: 28 };

function niceTicks(min: number, max: number, count: number): number[] {
  if (!(max > min)) return [min];
  const span = max - min;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const candidates = [step, step * 2, step * 5, step * 10];
  const chosen = candidates.find((s) => span / s <= count) ?? step * 10;
  const ticks: number[] = [];
  for (let v = Math.ceil(min / chosen) * chosen; v <= max + 1e-9; v += chosen) ticks.push(v);
  return ticks;
}

/** Minimal line chart on a canvas: one series, axes, grid ticks. */
export function drawLineChart(canvas: HTMLCanvasElement, series: Series, options: ChartOptions): void {
  canvas.width = options.width;
  canvas.height = options.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, options.width, options.height);
  ctx.font = "11px sans-serif";

  if (series.x.length === 0) {
    ctx.fillStyle = "#777";
    ctx.fillText("no samples yet", options.width / 2 - 36, options.height / 2);
    return;
  }

  const xMin = series.x[0];
  const xMax = series.x[series.x.length - 1] || xMin + 1;
  const yMax = Math.max(...series.y) * 1.08;
  const yMin = 0;
  const plotW = options.width - PAD.left - PAD.right;
  const plotH = options.height - PAD.top - PAD.bottom;
  const px = (x: number) => PAD.left + ((x - xMin) / (xMax - xMin || 1)) * plotW;
  const py = (y: number) => PAD.top + plotH - ((y - yMin) / (yMax - yMin || 1)) * plotH;

  ctx.strokeStyle = "#ddd";
  ctx.fillStyle = "#555";
  for (const tick of niceTicks(yMin, yMax, 5)) {
    ctx.beginPath();
    ctx.moveTo(PAD.left, py(tick));
    ctx.lineTo(options.width - PAD.right, py(tick));
    ctx.stroke();
    ctx.fillText(tick >= 1000 ? `${(tick / 1000).toFixed(1)}k` : String(Math.round(tick)),
      4, py(tick) + 4);
  }
  for (const tick of niceTicks(xMin, xMax, 8)) {
    ctx.fillText(`${Math.round(tick)}s`, px(tick) - 8, options.height - 8);
  }

  ctx.strokeStyle = "#2563eb";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  series.x.forEach((x, i) => {
    if (i === 0) ctx.moveTo(px(x), py(series.y[i]));
    else ctx.lineTo(px(x), py(series.y[i]));
  });
  ctx.stroke();

  ctx.fillStyle = "#333";
  ctx.fillText(options.yLabel, 4, 10);
  ctx.fillText(options.xLabel, options.width - PAD.right - 60, options.height - 8);
}
