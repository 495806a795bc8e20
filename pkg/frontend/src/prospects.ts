/** Prospect queue with stable display order.
 *
 * The displayed rows always reflect some exact server ordering, but a
 * background poll never reshuffles what the user is looking at: a changed
 * order is held as pending until the user asks for it.
 */

import type { Prospect } from "./api.js";

function sameOrder(a: readonly Prospect[], b: readonly Prospect[]): boolean {
  return a.length === b.length && a.every((p, i) => p.class_key === b[i]?.class_key);
}

export class ProspectQueue {
  private displayed: Prospect[] = [];
  private pending: Prospect[] | null = null;
  private loaded = false;

  get rows(): readonly Prospect[] {
    return this.displayed;
  }

  get hasPendingUpdate(): boolean {
    return this.pending !== null;
  }

  /** A server poll result. Adopted in place only when it cannot reorder
   * the visible rows (first load, or same keys in the same order). */
  refresh(serverOrder: Prospect[]): void {
    if (!this.loaded) {
      this.displayed = [...serverOrder];
      this.loaded = true;
      return;
    }
    if (sameOrder(this.displayed, serverOrder)) {
      this.displayed = [...serverOrder];
      this.pending = null;
      return;
    }
    this.pending = [...serverOrder];
  }

  /** Explicit user action: show the fresh server order. */
  applyPending(): void {
    if (this.pending !== null) {
      this.displayed = this.pending;
      this.pending = null;
    }
  }
}
