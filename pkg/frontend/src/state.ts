/** Session state and its pure reducers.
 *
 * Every UI transition is a function (state, action) -> new state; nothing in
 * here touches the network or the DOM, so the whole interaction loop is unit
 * testable and replayable from a request log.
 */

import {
  CATEGORIES,
  Category,
  GenerationRequest,
  GenerationResponse,
  GeneratedSet,
} from "./types.js";

export const MAX_SLOTS = 3;
export const HISTORY_LIMIT = 20;

export interface GivenSelection {
  category: Category;
  itemId: string;
}

export interface LockSelection {
  category: Category;
  imageB64: string;
}

export interface GenerationRecord {
  request: GenerationRequest;
  response: GenerationResponse;
}

export interface SessionState {
  given: GivenSelection[];
  locks: LockSelection[];
  k: number;
  rounds: number;
  lastSeed: number | null;
  history: GenerationRecord[];
}

export function emptySession(k = 4, rounds = 2): SessionState {
  return { given: [], locks: [], k, rounds, lastSeed: null, history: [] };
}

export function usedCategories(state: SessionState): Set<Category> {
  const used = new Set<Category>();
  for (const g of state.given) used.add(g.category);
  for (const l of state.locks) used.add(l.category);
  return used;
}

/** A category is selectable while given+locks stay within the 3-slot budget. */
export function canSelect(state: SessionState, category: Category): boolean {
  const used = usedCategories(state);
  return !used.has(category) && used.size < MAX_SLOTS;
}

export function selectGiven(state: SessionState, category: Category, itemId: string): SessionState {
  if (!canSelect(state, category)) return state;
  return { ...state, given: [...state.given, { category, itemId }] };
}

export function deselectGiven(state: SessionState, category: Category): SessionState {
  return { ...state, given: state.given.filter((g) => g.category !== category) };
}

/** Lock a synthesized item from a previously generated set, or unlock it. */
export function toggleLock(state: SessionState, set: GeneratedSet, category: Category): SessionState {
  const existing = state.locks.find((l) => l.category === category);
  if (existing) {
    return { ...state, locks: state.locks.filter((l) => l.category !== category) };
  }
  const item = set.items.find((i) => i.category === category);
  if (!item || item.source !== "synthesized") return state;
  if (!canSelect(state, category)) return state;
  return { ...state, locks: [...state.locks, { category, imageB64: item.image_b64 }] };
}

export function setK(state: SessionState, k: number): SessionState {
  if (!Number.isInteger(k) || k < 1 || k > 16) return state;
  return { ...state, k };
}

export function setRounds(state: SessionState, rounds: number): SessionState {
  if (!Number.isInteger(rounds) || rounds < 0 || rounds > 4) return state;
  return { ...state, rounds };
}

/** Request payload for the current selection; seed is always explicit. */
export function buildRequest(state: SessionState, seed: number): GenerationRequest {
  return {
    given: state.given.map((g) => ({ category: g.category, item_id: g.itemId })),
    locks: state.locks.map((l) => ({ category: l.category, image_b64: l.imageB64 })),
    k: state.k,
    rounds: state.rounds,
    seed,
  };
}

export function isSubmittable(state: SessionState): boolean {
  const used = usedCategories(state);
  return used.size >= 1 && used.size <= MAX_SLOTS;
}

/** Append-only, bounded history; also remembers the seed actually used. */
export function recordResult(
  state: SessionState,
  request: GenerationRequest,
  response: GenerationResponse
): SessionState {
  const history = [...state.history, { request, response }].slice(-HISTORY_LIMIT);
  return { ...state, history, lastSeed: response.seed };
}

export function latestResult(state: SessionState): GenerationRecord | null {
  return state.history.length ? state.history[state.history.length - 1] : null;
}

export interface RoundColumn {
  round: number;
  score: number;
}

/** Per-round score columns of one generated set: rounds 0..T, T+1 entries. */
export function compareRounds(set: GeneratedSet): RoundColumn[] {
  return set.round_scores.map((score, round) => ({ round, score }));
}

/** Which catalog categories are still selectable, for disabling buttons. */
export function selectableCategories(state: SessionState): Category[] {
  return CATEGORIES.filter((c) => canSelect(state, c));
}
