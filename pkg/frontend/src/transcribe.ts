/** Line-strip transcription (widening): one text input per zone, the zone
 * image always beside it, all filled rows submitted as one batch.
 */

import type { LabelBatch, LabelEventDraft } from "./api.js";
import { mintBatchId, type IdMinter } from "./batch.js";

export interface ZoneRect {
  band: number;
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Zone ids encode page, line band, and rect as "page#band#x:y:w:h". */
export function parseZoneId(zoneId: string): ZoneRect | null {
  const parts = zoneId.split("#");
  if (parts.length < 3) return null;
  const band = Number(parts[parts.length - 2]);
  const rect = (parts[parts.length - 1] ?? "").split(":").map(Number);
  if (!Number.isInteger(band) || rect.length !== 4 || rect.some((v) => !Number.isFinite(v))) {
    return null;
  }
  const [x, y, w, h] = rect as [number, number, number, number];
  return { band, x, y, w, h };
}

export interface TranscribeRow {
  zoneId: string;
  imageUrl: string;
  band: number;
  x: number;
  text: string;
}

export class TranscribeModel {
  readonly rows: TranscribeRow[];
  submitted = false;

  private gestureId: string | null = null;

  constructor(
    zoneIds: string[],
    imageUrlOf: (zoneId: string) => string,
    private readonly mintId: IdMinter = mintBatchId,
  ) {
    this.rows = zoneIds
      .map((zoneId) => {
        const rect = parseZoneId(zoneId);
        return {
          zoneId,
          imageUrl: imageUrlOf(zoneId),
          band: rect?.band ?? 0,
          x: rect?.x ?? 0,
          text: "",
        };
      })
      .sort((a, b) => a.band - b.band || a.x - b.x || (a.zoneId < b.zoneId ? -1 : 1));
  }

  /** Rows grouped into line strips, reading order within each band. */
  bands(): Map<number, TranscribeRow[]> {
    const out = new Map<number, TranscribeRow[]>();
    for (const row of this.rows) {
      const strip = out.get(row.band);
      if (strip === undefined) out.set(row.band, [row]);
      else strip.push(row);
    }
    return out;
  }

  setText(zoneId: string, text: string): void {
    const row = this.rows.find((r) => r.zoneId === zoneId);
    if (row === undefined) return;
    row.text = text;
    this.gestureId = null;
    this.submitted = false;
  }

  /** Rows that will become events; whitespace-only input never does. */
  validRows(): TranscribeRow[] {
    return this.rows.filter((r) => r.text.trim().length > 0);
  }

  /** Non-empty input that is whitespace only: flagged inline, no event. */
  invalidRows(): TranscribeRow[] {
    return this.rows.filter((r) => r.text.length > 0 && r.text.trim().length === 0);
  }

  get canSubmit(): boolean {
    return !this.submitted && this.validRows().length > 0;
  }

  buildBatch(collectionId: string): LabelBatch {
    if (this.gestureId === null) this.gestureId = this.mintId();
    const events: LabelEventDraft[] = this.validRows().map((r) => ({
      zone_id: r.zoneId,
      label: r.text.trim(),
      action: "new",
      mode: "widening",
    }));
    return { collection_id: collectionId, batch_id: this.gestureId, events };
  }

  markSubmitted(): void {
    this.submitted = true;
    this.gestureId = null;
  }
}
