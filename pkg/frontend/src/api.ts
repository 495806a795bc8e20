/** Typed client for the wordharvest /api/v1 surface.
 *
 * The fetch implementation is injectable so models and views can be
 * exercised against a scripted server in tests.
 */

export interface CollectionRow {
  collection_id: string;
  n_pages: number;
  n_zones: number;
  n_classes: number;
  n_events: number;
}

export interface ClassRow {
  class_key: string;
  label: string;
  n_labels: number;
  regime: string;
  model_version: number;
  eur: number | null;
}

export interface HitlistEntry {
  zone_id: string;
  score: number;
  already_labeled: boolean;
  image_url: string;
}

export interface HitlistPayload {
  class_key: string;
  label: string;
  model_version: number;
  generated_at: number;
  eur: number | null;
  eur_threshold: number | null;
  entries: HitlistEntry[];
}

export type LabelAction = "new" | "confirm" | "reject";
export type LabelMode = "widening" | "deepening";

export interface LabelEventDraft {
  zone_id: string;
  label: string;
  action: LabelAction;
  mode: LabelMode;
  user?: string;
}

export interface LabelBatch {
  collection_id: string;
  batch_id: string;
  events: LabelEventDraft[];
}

export interface RejectedEvent {
  index: number;
  zone_id: string;
  reason: string;
}

export interface SubmitReport {
  batch_id: string;
  accepted: number;
  accepted_event_ids: number[];
  rejected: RejectedEvent[];
  enqueued_classes: string[];
  duplicate: boolean;
}

export interface CycleReport {
  cycle_index: number;
  classes_retrained: string[];
  hitlists_regenerated: number;
  skipped_cold: string[];
  failures: unknown[];
  durations: Record<string, number>;
}

export interface Prospect {
  class_key: string;
  score: number;
  components: {
    eur: number;
    near_boundary_count: number;
    label_velocity: number;
  };
}

export interface HarvestPoint {
  timestamp: number;
  cumulative_labels: number;
  book_id: string;
}

export interface HarvestPayload {
  series: HarvestPoint[];
  peak_labels_per_minute: number;
}

export interface PageUploadReport {
  page_id: string;
  book_id: string;
  n_lines: number;
  n_zones: number;
  zone_ids: string[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    private readonly fetchLike: FetchLike = (input, init) => fetch(input, init),
    readonly base: string = "/api/v1",
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { accept: "application/json" } };
    if (body !== undefined) {
      init.headers = { ...(init.headers as Record<string, string>), "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchLike(this.base + path, init);
    if (!resp.ok) {
      let code = "http_error";
      let message = `HTTP ${resp.status}`;
      try {
        const payload = (await resp.json()) as { error?: { code?: string; message?: string } };
        if (payload.error) {
          code = payload.error.code ?? code;
          message = payload.error.message ?? message;
        }
      } catch {
        // non-JSON error body: keep the generic message
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  listCollections(): Promise<{ collections: CollectionRow[] }> {
    return this.request("GET", "/collections");
  }

  createCollection(collectionId: string, name = ""): Promise<{ collection_id: string; name: string }> {
    return this.request("POST", "/collections", { collection_id: collectionId, name });
  }

  uploadPage(
    collectionId: string,
    pageId: string,
    imagePgmBase64: string,
    bookId?: string,
  ): Promise<PageUploadReport> {
    const body: Record<string, string> = { page_id: pageId, image_pgm_base64: imagePgmBase64 };
    if (bookId) body.book_id = bookId;
    return this.request("POST", `/collections/${encodeURIComponent(collectionId)}/pages`, body);
  }

  listClasses(collectionId: string): Promise<{ classes: ClassRow[] }> {
    return this.request("GET", `/collections/${encodeURIComponent(collectionId)}/classes`);
  }

  hitlist(collectionId: string, classKey: string, limit?: number): Promise<HitlistPayload> {
    const query = limit === undefined ? "" : `?limit=${limit}`;
    return this.request(
      "GET",
      `/classes/${encodeURIComponent(collectionId)}/${encodeURIComponent(classKey)}/hitlist${query}`,
    );
  }

  submitLabels(batch: LabelBatch): Promise<SubmitReport> {
    return this.request("POST", "/labels", batch);
  }

  runCycle(collectionId: string, now?: number): Promise<CycleReport> {
    const body = now === undefined ? {} : { now };
    return this.request("POST", `/collections/${encodeURIComponent(collectionId)}/cycle`, body);
  }

  prospects(collectionId: string, top?: number): Promise<{ prospects: Prospect[] }> {
    const query = top === undefined ? "" : `?top=${top}`;
    return this.request("GET", `/collections/${encodeURIComponent(collectionId)}/prospects${query}`);
  }

  harvest(collectionId: string, bucket?: number, book?: string): Promise<HarvestPayload> {
    const params = new URLSearchParams();
    if (bucket !== undefined) params.set("bucket", String(bucket));
    if (book !== undefined) params.set("book", book);
    const query = params.size > 0 ? `?${params.toString()}` : "";
    return this.request("GET", `/collections/${encodeURIComponent(collectionId)}/metrics/harvest${query}`);
  }

  /** Absolute URL for a zone crop; usable directly as an <img> src. */
  zoneImageUrl(zoneId: string): string {
    return `${this.base}/zones/${encodeURIComponent(zoneId)}/image`;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }
}
