/** Wire types mirroring the generation service's JSON endpoints. */

export const CATEGORIES = ["upper", "bag", "lower", "shoes"] as const;
export type Category = (typeof CATEGORIES)[number];

export interface HealthResponse {
  status: "ready" | "loading";
  model_hash: string | null;
  resolution?: number;
  rounds?: number;
  catalog_size?: number;
  error?: string | null;
}

export interface CatalogItem {
  id: string;
  category: Category;
  thumbnail: string; // base64 PNG
}

export interface CatalogResponse {
  items: CatalogItem[];
  total: number;
  page: number;
  page_size: number;
  model_hash: string;
}

export interface GivenRequestItem {
  category: Category;
  item_id?: string;
  image_b64?: string;
}

export interface LockRequestItem {
  category: Category;
  image_b64: string;
}

export interface GenerationRequest {
  given: GivenRequestItem[];
  locks: LockRequestItem[];
  k: number;
  rounds: number;
  seed?: number;
}

export type ItemSource = "given" | "locked" | "synthesized";

export interface GeneratedItem {
  category: Category;
  image_b64: string;
  source: ItemSource;
}

export interface GeneratedSet {
  items: GeneratedItem[];
  round_scores: number[]; // rounds 0..T
}

export interface GenerationResponse {
  sets: GeneratedSet[];
  seed: number;
  rounds: number;
  k: number;
  model_hash: string;
  config_hash: string;
}
