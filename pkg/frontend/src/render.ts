/** Pure HTML renderers: (state, data) -> markup string.
 *
 * No score computation happens here; sparklines and badges display exactly
 * what the service returned.
 */

import { compareRounds, SessionState, selectableCategories, usedCategories } from "./state.js";
import { CatalogItem, GeneratedSet } from "./types.js";

function esc(text: string): string {
  return text.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" }[c] as string));
}

function img(b64: string, alt: string): string {
  return `<img src="data:image/png;base64,${b64}" alt="${esc(alt)}" width="64" height="64">`;
}

export function renderBanner(message: string): string {
  return `<div class="banner" role="alert">${esc(message)}</div>`;
}

export function renderCatalog(state: SessionState, items: CatalogItem[]): string {
  const open = new Set(selectableCategories(state));
  const cells = items.map((item) => {
    const taken = state.given.some((g) => g.itemId === item.id);
    const disabled = taken || !open.has(item.category) ? " disabled" : "";
    return (
      `<button class="catalog-item" data-item="${esc(item.id)}" data-category="${item.category}"${disabled}>` +
      `${img(item.thumbnail, item.id)}<span>${item.category}</span></button>`
    );
  });
  return `<div class="catalog" role="list">${cells.join("")}</div>`;
}

export function renderSelection(state: SessionState): string {
  const used = [...usedCategories(state)].sort().join(", ") || "none";
  const seed = state.lastSeed === null ? "" : ` <span class="seed-badge">seed ${state.lastSeed}</span>`;
  return (
    `<div class="selection">given+locked: ${esc(used)} (max 3)` +
    `<button data-action="generate">Generate ${state.k}</button>` +
    `<button data-action="reroll">Reroll</button>${seed}</div>`
  );
}

/** Inline per-round score trace, one point per round 0..T. */
export function renderSparkline(set: GeneratedSet): string {
  const columns = compareRounds(set);
  const points = columns
    .map((c) => `<span class="spark-point" data-round="${c.round}">${c.score.toFixed(2)}</span>`)
    .join(" ");
  return `<span class="sparkline" title="oracle score per round">${points}</span>`;
}

export function renderSet(state: SessionState, set: GeneratedSet, setIndex: number): string {
  const tiles = set.items.map((item) => {
    const locked = state.locks.some((l) => l.category === item.category);
    const lockable = item.source === "synthesized" || locked;
    const button = lockable
      ? `<button data-action="toggle-lock" data-set="${setIndex}" data-category="${item.category}">` +
        `${locked ? "Unlock" : "Lock"}</button>`
      : "";
    return (
      `<figure class="tile ${item.source}${locked ? " locked" : ""}">` +
      `${img(item.image_b64, `${item.category} (${item.source})`)}` +
      `<figcaption>${item.category}</figcaption>${button}</figure>`
    );
  });
  return (
    `<section class="generated-set" data-set="${setIndex}">${tiles.join("")}` +
    `${renderSparkline(set)}` +
    `<button data-action="compare-rounds" data-set="${setIndex}">Rounds</button></section>`
  );
}

/** Side-by-side round panel: T+1 columns, one per round 0..T. */
export function renderRoundComparison(set: GeneratedSet): string {
  const columns = compareRounds(set)
    .map(
      (c) =>
        `<div class="round-column" data-round="${c.round}">` +
        `<h3>round ${c.round}</h3><p>score ${c.score.toFixed(3)}</p></div>`
    )
    .join("");
  return `<div class="round-comparison">${columns}</div>`;
}

export function renderResults(state: SessionState): string {
  const latest = state.history.length ? state.history[state.history.length - 1] : null;
  if (!latest) return `<div class="results empty">no generations yet</div>`;
  const sets = latest.response.sets.map((s, i) => renderSet(state, s, i)).join("");
  return `<div class="results">${sets}</div>`;
}
