import { ApiClient, ApiError } from "./api.js";
import { actionButtons, statusBadgeClass } from "./actions.js";
import { drawLineChart } from "./chart.js";
import { LogBuffer } from "./logbuffer.js";
import { Poller } from "./poll.js";
import { bandwidthSeries, seriesSummary } from "./series.js";
import type { BenchmarkSummary, ExecutionDetail, ExecutionSummary } from "./types.js";

const POLL_INTERVAL_MS = 2000;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function fmtTime(epoch: number): string {
  return new Date(epoch * 1000).toISOString().replace("T", " ").slice(0, 19);
}

export class Banners {
  constructor(private host: HTMLElement) {}

  show(message: string, kind: "error" | "info" = "error"): void {
    const banner = el("div", { class: `banner banner-${kind}` }, message);
    const dismiss = el("button", { class: "banner-dismiss" }, "x");
    dismiss.addEventListener("click", () => banner.remove());
    banner.append(dismiss);
    this.host.append(banner);
  }

  clear(): void {
    this.host.replaceChildren();
  }
}

export class BenchmarkListView {
  constructor(private api: ApiClient, private root: HTMLElement, private banners: Banners,
              private navigate: (hash: string) => void) {}

  async render(): Promise<void> {
    let benchmarks: BenchmarkSummary[] = [];
    let executions: ExecutionSummary[] = [];
    try {
      [benchmarks, executions] = await Promise.all([
        this.api.listBenchmarks(), this.api.listExecutions()]);
    } catch (err) {
      this.banners.show(String(err));
      return;
    }
    const table = el("table", { class: "listing" },
      el("thead", {}, el("tr", {},
        el("th", {}, "id"), el("th", {}, "name"), el("th", {}, "schedule"),
        el("th", {}, "active"), el("th", {}, ""))));
    const body = el("tbody");
    for (const bench of benchmarks) {
      const trigger = el("button", {}, "Trigger run");
      trigger.addEventListener("click", async () => {
        try {
          const execution = await this.api.trigger(bench.id);
          this.navigate(`#/executions/${execution.id}`);
        } catch (err) {
          this.banners.show(String(err));
        }
      });
      body.append(el("tr", {},
        el("td", {}, bench.id),
        el("td", {}, bench.name),
        el("td", {}, bench.schedule ?? "(manual)"),
        el("td", {}, bench.active ? "yes" : "no"),
        el("td", {}, trigger)));
    }
    table.append(body);

    const execTable = el("table", { class: "listing" },
      el("thead", {}, el("tr", {},
        el("th", {}, "id"), el("th", {}, "benchmark"), el("th", {}, "status"),
        el("th", {}, "cause"), el("th", {}, "created"))));
    const execBody = el("tbody");
    for (const execution of executions.slice().reverse()) {
      const link = el("a", { href: `#/executions/${execution.id}` }, execution.id);
      execBody.append(el("tr", {},
        el("td", {}, link),
        el("td", {}, execution.benchmark_id),
        el("td", {}, el("span", { class: `badge ${statusBadgeClass(execution.displayed_status)}` },
          execution.displayed_status)),
        el("td", {}, execution.trigger_cause),
        el("td", {}, fmtTime(execution.created_at))));
    }
    execTable.append(execBody);

    this.root.replaceChildren(
      el("h2", {}, "Benchmarks"), table,
      el("h2", {}, "Executions"), execTable);
  }
}

export class ExecutionDetailView {
  private logBuffer = new LogBuffer();
  private poller: Poller | null = null;
  private chartMetric: string | null = null;

  constructor(private api: ApiClient, private root: HTMLElement, private banners: Banners) {}

  dispose(): void {
    this.poller?.stop();
    this.poller = null;
  }

  async render(executionId: string): Promise<void> {
    this.dispose();
    this.logBuffer.clear();
    let detail: ExecutionDetail;
    try {
      detail = await this.api.getExecution(executionId);
    } catch (err) {
      this.banners.show(String(err));
      return;
    }

    const status = el("span", { class: "badge", id: "status-badge" });
    const actions = el("div", { class: "actions", id: "action-bar" });
    const timeline = el("tbody", { id: "event-timeline" });
    const resources = el("tbody", { id: "resource-list" });
    const logPane = el("pre", { class: "log", id: "log-pane" });
    const canvas = el("canvas", { id: "bandwidth-chart" });
    const chartNote = el("div", { class: "muted", id: "chart-note" });

    this.root.replaceChildren(
      el("h2", {}, `Execution ${detail.id} `, status),
      el("div", { class: "muted" },
        `benchmark ${detail.benchmark_id} | cause ${detail.trigger_cause} | created ${fmtTime(detail.created_at)}`),
      actions,
      el("div", { class: "columns" },
        el("div", {},
          el("h3", {}, "Events"),
          el("table", { class: "listing" },
            el("thead", {}, el("tr", {}, el("th", {}, "t"), el("th", {}, "event"), el("th", {}, "note"))),
            timeline),
          el("h3", {}, "Resources"),
          el("table", { class: "listing" },
            el("thead", {}, el("tr", {}, el("th", {}, "id"), el("th", {}, "kind"),
              el("th", {}, "role"), el("th", {}, "status"))),
            resources)),
        el("div", {},
          el("h3", {}, "Bandwidth"), canvas, chartNote,
          el("h3", {}, "Live log"), logPane)));

    const apply = (d: ExecutionDetail) => {
      status.textContent = d.displayed_status; // verbatim from the API
      status.className = `badge ${statusBadgeClass(d.displayed_status)}`;
      actions.replaceChildren(...actionButtons(d).map((button) => {
        const node = el("button", {}, button.label);
        node.disabled = !button.enabled;
        node.addEventListener("click", () => void this.runAction(d.id, button.id));
        return node;
      }));
      timeline.replaceChildren(...d.events.map((event) => el("tr", {},
        el("td", {}, fmtTime(event.at)),
        el("td", {}, event.event),
        el("td", {}, event.note))));
      resources.replaceChildren(...d.resources.map((resource) => el("tr", {},
        el("td", {}, resource.id), el("td", {}, resource.kind),
        el("td", {}, resource.role), el("td", {}, resource.status))));
    };
    apply(detail);

    const benchmark = await this.api.getBenchmark(detail.benchmark_id).catch(() => null);
    this.chartMetric = benchmark?.metrics.find(
      (m) => m.scale === "ratio" || m.scale === "interval")?.name ?? null;

    const refresh = async () => {
      const current = await this.api.getExecution(executionId);
      apply(current);
      const page = await this.api.getLog(executionId, this.logBuffer.cursor);
      for (const line of this.logBuffer.ingest(page)) {
        logPane.append(`${fmtTime(line.at)}  ${line.line}\n`);
      }
      if (this.chartMetric) {
        const observations = await this.api.getObservations(executionId, this.chartMetric);
        const series = bandwidthSeries(observations);
        drawLineChart(canvas, series, {
          width: 520, height: 240, xLabel: "offset", yLabel: this.chartMetric });
        const summary = seriesSummary(series);
        chartNote.textContent = summary
          ? `${series.x.length} samples | mean ${summary.mean.toFixed(0)} | ` +
            `min ${summary.min.toFixed(0)} | max ${summary.max.toFixed(0)}`
          : "no numeric samples";
      }
      if (current.terminal) this.poller?.stop();
    };

    this.poller = new Poller(refresh, POLL_INTERVAL_MS);
    this.poller.start();
  }

  private async runAction(executionId: string, action: string): Promise<void> {
    try {
      if (action === "enter_dev_mode") await this.api.enterDevMode(executionId);
      else if (action === "exit_dev_mode") await this.api.exitDevMode(executionId);
      else if (action === "reprovision") await this.api.reprovision(executionId);
      else if (action === "release_now") await this.api.releaseNow(executionId);
      await this.poller?.tick();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale affordances: the state moved under us; refresh the view
        this.banners.show(`state changed: ${err.detail}`, "info");
        await this.poller?.tick();
      } else {
        this.banners.show(String(err));
      }
    }
  }
}
