/** Hit-list review state: a ranked grid of zone tiles the user walks with
 * the keyboard, marking confirms and rejects, then submits as one batch.
 */

import {
  ApiError,
  type HitlistPayload,
  type LabelBatch,
  type LabelEventDraft,
  type SubmitReport,
} from "./api.js";
import { mintBatchId, type IdMinter } from "./batch.js";

export type Mark = "unmarked" | "confirm" | "reject";

export interface Tile {
  zoneId: string;
  score: number;
  alreadyLabeled: boolean;
  imageUrl: string;
  mark: Mark;
}

// server reasons that mean the hit list on screen no longer exists
// server-side ("no hit list for class", "zone not in current hit list")
const STALE_REASON = /hit list/;

export class HitListModel {
  readonly classKey: string;
  readonly label: string;
  readonly modelVersion: number;
  readonly tiles: Tile[];
  cursor = 0;
  stale = false;
  staleNote = "";
  submitted = false;
  lastReport: SubmitReport | null = null;

  private gestureId: string | null = null;

  constructor(
    payload: HitlistPayload,
    private readonly mintId: IdMinter = mintBatchId,
  ) {
    this.classKey = payload.class_key;
    this.label = payload.label;
    this.modelVersion = payload.model_version;
    this.tiles = payload.entries.map((e) => ({
      zoneId: e.zone_id,
      score: e.score,
      alreadyLabeled: e.already_labeled,
      imageUrl: e.image_url,
      mark: "unmarked" as Mark,
    }));
  }

  get current(): Tile | null {
    return this.tiles[this.cursor] ?? null;
  }

  next(): void {
    if (this.cursor < this.tiles.length - 1) this.cursor += 1;
  }

  prev(): void {
    if (this.cursor > 0) this.cursor -= 1;
  }

  private setMark(mark: Mark): void {
    const tile = this.tiles[this.cursor];
    if (tile === undefined) return;
    tile.mark = tile.mark === mark ? "unmarked" : mark;
    // editing marks starts a new gesture and reopens submission
    this.gestureId = null;
    this.submitted = false;
  }

  toggleConfirm(): void {
    this.setMark("confirm");
  }

  toggleReject(): void {
    this.setMark("reject");
  }

  marked(): Tile[] {
    return this.tiles.filter((t) => t.mark !== "unmarked");
  }

  get canSubmit(): boolean {
    return !this.stale && !this.submitted && this.marked().length > 0;
  }

  /** Flag the view stale when the server's model version moved past ours. */
  noteServerVersion(version: number): void {
    if (version > this.modelVersion && !this.stale) {
      this.stale = true;
      this.staleNote = `model advanced to v${version}`;
    }
  }

  /** The batch for the current gesture: marked tiles only, one batch id.
   * Calling again without editing marks reuses the id (retry path). */
  buildBatch(collectionId: string): LabelBatch {
    if (this.gestureId === null) this.gestureId = this.mintId();
    const events: LabelEventDraft[] = this.marked().map((t) => ({
      zone_id: t.zoneId,
      label: this.label,
      action: t.mark === "confirm" ? "confirm" : "reject",
      mode: "deepening",
    }));
    return { collection_id: collectionId, batch_id: this.gestureId, events };
  }

  /** Fold the server's verdict back in; true when the gesture landed. */
  applyReport(report: SubmitReport): boolean {
    this.lastReport = report;
    const staleRejects = report.rejected.filter((r) => STALE_REASON.test(r.reason));
    if (staleRejects.length > 0) {
      this.stale = true;
      this.staleNote = staleRejects[0]?.reason ?? "hit list changed";
    }
    const landed = report.accepted > 0 || report.duplicate;
    if (landed) this.submitted = true;
    this.gestureId = null;
    return landed;
  }

  /** Submission failures: a conflict means the list is stale; anything
   * else keeps the gesture id so a retry reuses the same batch id. */
  applyError(err: unknown): void {
    if (err instanceof ApiError && err.status === 409) {
      this.stale = true;
      this.staleNote = err.message;
      this.gestureId = null;
    }
  }
}
