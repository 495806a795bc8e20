/** Application shell: one collection, three screens, a polling loop, and
 * the keyboard-first review flow. All server state arrives by polling.
 */

import { Api, ApiError, type ClassRow, type HarvestPayload } from "./api.js";
import { clear, el } from "./dom.js";
import { HitListModel } from "./hitlist.js";
import { ProspectQueue } from "./prospects.js";
import { TranscribeModel } from "./transcribe.js";
import { renderDashboard, renderHitListView, renderTranscribeView } from "./views.js";

type Screen = "dashboard" | "hitlist" | "transcribe";

function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export class App {
  private screen: Screen = "dashboard";
  private collectionId: string | null = null;
  private hitlist: HitListModel | null = null;
  private transcribe: TranscribeModel | null = null;
  private readonly queue = new ProspectQueue();
  private harvest: HarvestPayload | null = null;
  private classes: ClassRow[] = [];
  private offline = false;
  private statusNote = "";
  private refreshArmed = false;
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly doc: Document,
    private readonly mount: Element,
    private readonly api: Api = new Api(),
    private readonly pollMs = 3000,
  ) {}

  async start(): Promise<void> {
    this.doc.addEventListener("keydown", (ev) => this.onKey(ev as KeyboardEvent));
    await this.ensureCollection();
    await this.poll();
    this.pollTimer = setInterval(() => void this.poll(), this.pollMs);
    this.render();
  }

  stop(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
  }

  private async ensureCollection(): Promise<void> {
    try {
      const { collections } = await this.api.listCollections();
      const first = collections[0];
      if (first !== undefined) {
        this.collectionId = first.collection_id;
      } else {
        const made = await this.api.createCollection("collection");
        this.collectionId = made.collection_id;
      }
      this.offline = false;
    } catch (err) {
      if (err instanceof ApiError) throw err;
      this.offline = true;
    }
  }

  private async poll(): Promise<void> {
    if (this.collectionId === null) {
      await this.ensureCollection();
      if (this.collectionId === null) {
        this.render();
        return;
      }
    }
    try {
      const cid = this.collectionId;
      const [classes, prospects, harvest] = await Promise.all([
        this.api.listClasses(cid),
        this.api.prospects(cid),
        this.api.harvest(cid),
      ]);
      this.classes = classes.classes;
      this.queue.refresh(prospects.prospects);
      this.harvest = harvest;
      this.offline = false;
      this.noteModelVersions();
      if (this.hitlist?.stale && this.refreshArmed && this.hitlist.marked().length === 0) {
        // the post-submit cycle landed; pull the fresh list automatically
        this.refreshArmed = false;
        await this.reloadHitlist();
        return;
      }
    } catch (err) {
      if (!(err instanceof ApiError)) this.offline = true;
    }
    this.render();
  }

  private noteModelVersions(): void {
    if (this.hitlist === null) return;
    const key = this.hitlist.classKey;
    const row = this.classes.find((c) => c.class_key === key);
    if (row !== undefined) this.hitlist.noteServerVersion(row.model_version);
  }

  private onKey(ev: KeyboardEvent): void {
    if (this.screen !== "hitlist" || this.hitlist === null) return;
    const target = ev.target as Element | null;
    const tag = target?.tagName?.toLowerCase() ?? "";
    if (tag === "input" || tag === "textarea") return;
    switch (ev.key) {
      case "j":
        this.hitlist.next();
        break;
      case "k":
        this.hitlist.prev();
        break;
      case "c":
        this.hitlist.toggleConfirm();
        break;
      case "x":
        this.hitlist.toggleReject();
        break;
      case "Enter":
        void this.submitHitlist();
        return;
      default:
        return;
    }
    ev.preventDefault();
    this.render();
  }

  private async openHitlist(classKey: string): Promise<void> {
    if (this.collectionId === null) return;
    try {
      const payload = await this.api.hitlist(this.collectionId, classKey);
      this.hitlist = new HitListModel(payload);
      this.refreshArmed = false;
      this.screen = "hitlist";
      this.statusNote = "";
    } catch (err) {
      this.statusNote = err instanceof ApiError ? err.message : "request failed";
    }
    this.render();
  }

  private async reloadHitlist(): Promise<void> {
    if (this.hitlist !== null) await this.openHitlist(this.hitlist.classKey);
  }

  private async submitHitlist(): Promise<void> {
    const model = this.hitlist;
    if (model === null || this.collectionId === null || !model.canSubmit) return;
    const batch = model.buildBatch(this.collectionId);
    try {
      const report = await this.api.submitLabels(batch);
      if (model.applyReport(report)) this.refreshArmed = true;
    } catch (err) {
      model.applyError(err);
      this.statusNote =
        err instanceof ApiError ? err.message : "submit failed, press enter to retry";
    }
    this.render();
  }

  private async submitTranscription(): Promise<void> {
    const model = this.transcribe;
    if (model === null || this.collectionId === null || !model.canSubmit) return;
    const batch = model.buildBatch(this.collectionId);
    try {
      const report = await this.api.submitLabels(batch);
      model.markSubmitted();
      this.statusNote = `${report.accepted} labels accepted`;
      await this.poll();
    } catch (err) {
      this.statusNote =
        err instanceof ApiError ? err.message : "submit failed, submit again to retry";
      this.render();
    }
  }

  private async uploadPage(file: File): Promise<void> {
    if (this.collectionId === null) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    const pageId = file.name.replace(/\.[a-z0-9]+$/i, "");
    try {
      const report = await this.api.uploadPage(this.collectionId, pageId, toBase64(bytes));
      this.transcribe = new TranscribeModel(report.zone_ids, (z) => this.api.zoneImageUrl(z));
      this.screen = "transcribe";
      this.statusNote = `${report.n_zones} zones on ${report.n_lines} lines`;
    } catch (err) {
      this.statusNote = err instanceof ApiError ? err.message : "upload failed";
    }
    this.render();
  }

  render(): void {
    clear(this.mount);
    this.mount.append(this.renderNav());
    const body = el(this.doc, "div", { class: "screen" });
    this.mount.append(body);
    if (this.screen === "hitlist" && this.hitlist !== null) {
      renderHitListView(this.doc, body, this.hitlist, {
        onSubmit: () => void this.submitHitlist(),
        onReload: () => void this.reloadHitlist(),
        onSelect: (index) => {
          if (this.hitlist !== null) {
            this.hitlist.cursor = index;
            this.render();
          }
        },
      });
    } else if (this.screen === "transcribe" && this.transcribe !== null) {
      renderTranscribeView(this.doc, body, this.transcribe, this.collectionId ?? "", {
        onSubmit: () => void this.submitTranscription(),
      });
    } else {
      renderDashboard(
        this.doc,
        body,
        {
          collectionId: this.collectionId,
          offline: this.offline,
          harvest: this.harvest,
          queue: this.queue,
        },
        {
          onRetry: () => void this.poll(),
          onOpenProspect: (classKey) => void this.openHitlist(classKey),
          onApplyQueue: () => {
            this.queue.applyPending();
            this.render();
          },
        },
      );
    }
  }

  private renderNav(): Element {
    const nav = el(this.doc, "nav", { class: "topnav" });
    const dash = el(this.doc, "button", { text: "Dashboard" });
    dash.addEventListener("click", () => {
      this.screen = "dashboard";
      this.render();
    });
    nav.append(dash);

    if (this.transcribe !== null) {
      const tr = el(this.doc, "button", { text: "Transcribe" });
      tr.addEventListener("click", () => {
        this.screen = "transcribe";
        this.render();
      });
      nav.append(tr);
    }
    if (this.hitlist !== null) {
      const hl = el(this.doc, "button", { text: `Hit list: ${this.hitlist.label}` });
      hl.addEventListener("click", () => {
        this.screen = "hitlist";
        this.render();
      });
      nav.append(hl);
    }

    const upload = el(this.doc, "input", {
      type: "file",
      accept: ".pgm,.pnm",
      "data-role": "upload",
    });
    upload.addEventListener("change", () => {
      const file = upload.files?.[0];
      if (file !== undefined) void this.uploadPage(file);
    });
    nav.append(el(this.doc, "label", { class: "upload-label" }, ["Upload page ", upload]));

    nav.append(
      el(this.doc, "span", {
        class: "collection-tag",
        text: this.collectionId ?? "no collection",
      }),
    );
    if (this.statusNote !== "") {
      nav.append(el(this.doc, "span", { class: "status-note", text: this.statusNote }));
    }
    return nav;
  }
}

declare global {
  interface Window {
    WORDHARVEST_API?: string;
  }
}

if (typeof document !== "undefined") {
  const mount = document.querySelector("#app");
  if (mount !== null) {
    const base = window.WORDHARVEST_API ?? "/api/v1";
    const api = new Api((input, init) => fetch(input, init), base);
    void new App(document, mount, api).start();
  }
}
