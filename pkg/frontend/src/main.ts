/** Browser entry point: wires the reducers, the API client, and the DOM.
 *
 * One in-flight generation at a time; superseded responses are dropped by
 * the client, so the screen always shows the newest seed's result.
 */

import { ApiError, drawSeed, ExplorerApi } from "./api.js";
import {
  buildRequest,
  emptySession,
  isSubmittable,
  latestResult,
  recordResult,
  selectGiven,
  SessionState,
  toggleLock,
} from "./state.js";
import {
  renderBanner,
  renderCatalog,
  renderResults,
  renderRoundComparison,
  renderSelection,
} from "./render.js";
import { CatalogItem, Category } from "./types.js";

const api = new ExplorerApi("");
let state: SessionState = emptySession();
let catalogItems: CatalogItem[] = [];
let banner = "";
let roundPanel = "";

function paint(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.innerHTML =
    (banner ? renderBanner(banner) : "") +
    renderSelection(state) +
    renderCatalog(state, catalogItems) +
    renderResults(state) +
    roundPanel;
}

async function generate(freshSeed: boolean): Promise<void> {
  if (!isSubmittable(state)) {
    banner = "select 1-3 items first";
    paint();
    return;
  }
  const seed = freshSeed || state.lastSeed === null ? drawSeed() : state.lastSeed;
  const request = buildRequest(state, seed);
  try {
    const response = await api.generate(request);
    if (response === null) return; // superseded by a newer request
    banner = "";
    state = recordResult(state, request, response);
  } catch (err) {
    banner = err instanceof ApiError ? err.message : "service unreachable";
  }
  paint();
}

function onClick(event: Event): void {
  const target = (event.target as HTMLElement).closest("button");
  if (!target || target.hasAttribute("disabled")) return;
  const itemId = target.dataset.item;
  if (itemId) {
    state = selectGiven(state, target.dataset.category as Category, itemId);
    paint();
    return;
  }
  const latest = latestResult(state);
  switch (target.dataset.action) {
    case "generate":
      void generate(false);
      break;
    case "reroll":
      void generate(true);
      break;
    case "toggle-lock":
      if (latest) {
        const set = latest.response.sets[Number(target.dataset.set)];
        state = toggleLock(state, set, target.dataset.category as Category);
        paint();
      }
      break;
    case "compare-rounds":
      if (latest) {
        roundPanel = renderRoundComparison(latest.response.sets[Number(target.dataset.set)]);
        paint();
      }
      break;
  }
}

export async function boot(): Promise<void> {
  document.addEventListener("click", onClick);
  try {
    const health = await api.health();
    if (health.status !== "ready") {
      banner = "model is warming up, retry shortly";
    } else {
      const page = await api.catalog(0, 48);
      catalogItems = page.items;
    }
  } catch {
    banner = "service unreachable";
  }
  paint();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot();
}
