import { ApiClient } from "./api.js";
import { Banners, BenchmarkListView, ExecutionDetailView } from "./view.js";

const SETTINGS_KEY = "cwb-dashboard-settings";

function loadSettings(): { baseUrl: string; token: string } {
  try {
    const raw = localStorage.getItem(SETTINGS_KEY);
    if (raw) return JSON.parse(raw);
  } catch {
    /* fall through to defaults */
  }
  return { baseUrl: window.location.origin, token: "cwb-operator-token" };
}

function main(): void {
  const settings = loadSettings();
  const api = new ApiClient(settings);
  const bannerHost = document.getElementById("banners") as HTMLElement;
  const content = document.getElementById("content") as HTMLElement;
  const banners = new Banners(bannerHost);

  const baseUrlInput = document.getElementById("base-url") as HTMLInputElement;
  const tokenInput = document.getElementById("token") as HTMLInputElement;
  baseUrlInput.value = settings.baseUrl;
  tokenInput.value = settings.token;
  (document.getElementById("save-settings") as HTMLButtonElement).addEventListener("click", () => {
    const next = { baseUrl: baseUrlInput.value.replace(/\/$/, ""), token: tokenInput.value };
    localStorage.setItem(SETTINGS_KEY, JSON.stringify(next));
    api.configure(next);
    void route();
  });

  const listView = new BenchmarkListView(api, content, banners,
    (hash) => { window.location.hash = hash; });
  const detailView = new ExecutionDetailView(api, content, banners);

  async function route(): Promise<void> {
    banners.clear();
    detailView.dispose();
    const hash = window.location.hash || "#/benchmarks";
    const match = hash.match(/^#\/executions\/(.+)$/);
    if (match) await detailView.render(match[1]);
    else await listView.render();
  }

  window.addEventListener("hashchange", () => void route());
  void route();
}

main();
