import { describe, expect, it } from "vitest";

import { Api, ApiError, type HitlistPayload, type LabelBatch, type SubmitReport } from "../src/api.js";
import { HitListModel } from "../src/hitlist.js";

function payload(n = 12, version = 1): HitlistPayload {
  return {
    class_key: "amsterdam",
    label: "amsterdam",
    model_version: version,
    generated_at: 1000.0,
    eur: 0.4,
    eur_threshold: -2.0,
    entries: Array.from({ length: n }, (_, i) => ({
      zone_id: `page-0#0#${i * 50}:0:40:20`,
      score: 10 - i * 0.1,
      already_labeled: false,
      image_url: `/api/v1/zones/zone-${i}/image`,
    })),
  };
}

function seqMinter(): () => string {
  let n = 0;
  return () => `batch-${++n}`;
}

function okReport(batch: LabelBatch): SubmitReport {
  return {
    batch_id: batch.batch_id,
    accepted: batch.events.length,
    accepted_event_ids: batch.events.map((_, i) => i + 1),
    rejected: [],
    enqueued_classes: [batch.events[0]?.label ?? ""],
    duplicate: false,
  };
}

function confirmFirst(model: HitListModel, count: number): void {
  for (let i = 0; i < count; i++) {
    model.toggleConfirm();
    model.next();
  }
}

describe("marking with the keyboard walk", () => {
  it("confirms ten tiles in order", () => {
    const model = new HitListModel(payload());
    confirmFirst(model, 10);
    expect(model.marked()).toHaveLength(10);
    expect(model.canSubmit).toBe(true);
  });

  it("toggles a mark off on repeat", () => {
    const model = new HitListModel(payload());
    model.toggleConfirm();
    model.toggleConfirm();
    expect(model.marked()).toHaveLength(0);
  });

  it("switches confirm to reject in place", () => {
    const model = new HitListModel(payload());
    model.toggleConfirm();
    model.toggleReject();
    expect(model.tiles[0]?.mark).toBe("reject");
  });

  it("clamps the cursor at both ends", () => {
    const model = new HitListModel(payload(2));
    model.prev();
    expect(model.cursor).toBe(0);
    model.next();
    model.next();
    model.next();
    expect(model.cursor).toBe(1);
  });
});

describe("the batch contract", () => {
  it("ten confirms make one batch of ten events", () => {
    const model = new HitListModel(payload(12), seqMinter());
    confirmFirst(model, 10);
    const batch = model.buildBatch("coll");
    expect(batch.collection_id).toBe("coll");
    expect(batch.batch_id).toBe("batch-1");
    expect(batch.events).toHaveLength(10);
    for (const event of batch.events) {
      expect(event.action).toBe("confirm");
      expect(event.label).toBe("amsterdam");
      expect(event.mode).toBe("deepening");
    }
  });

  it("only marked tiles enter the batch", () => {
    const model = new HitListModel(payload(12), seqMinter());
    model.toggleConfirm();
    model.next();
    model.next();
    model.toggleReject();
    const batch = model.buildBatch("coll");
    expect(batch.events).toHaveLength(2);
    expect(batch.events.map((e) => e.action)).toEqual(["confirm", "reject"]);
    const marked = new Set(model.marked().map((t) => t.zoneId));
    expect(batch.events.every((e) => marked.has(e.zone_id))).toBe(true);
  });

  it("nothing marked means submit stays disabled", () => {
    const model = new HitListModel(payload());
    expect(model.canSubmit).toBe(false);
  });

  it("a retry without edits reuses the batch id", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 4);
    const first = model.buildBatch("coll");
    const second = model.buildBatch("coll");
    expect(second.batch_id).toBe(first.batch_id);
  });

  it("editing marks starts a new gesture with a new id", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 2);
    const first = model.buildBatch("coll");
    model.toggleConfirm();
    const second = model.buildBatch("coll");
    expect(second.batch_id).not.toBe(first.batch_id);
    expect(second.events).toHaveLength(3);
  });

  it("a landed report closes the gesture", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 3);
    const landed = model.applyReport(okReport(model.buildBatch("coll")));
    expect(landed).toBe(true);
    expect(model.submitted).toBe(true);
    expect(model.canSubmit).toBe(false);
  });

  it("a duplicate replay counts as landed", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 3);
    const report = okReport(model.buildBatch("coll"));
    expect(model.applyReport({ ...report, accepted: 0, duplicate: true })).toBe(true);
  });
});

describe("idempotent retry through the client", () => {
  it("one flaky gesture produces two posts with one batch id", async () => {
    const bodies: LabelBatch[] = [];
    let calls = 0;
    const api = new Api((_, init) => {
      calls += 1;
      const body = JSON.parse(String(init?.body)) as LabelBatch;
      bodies.push(body);
      if (calls === 1) return Promise.reject(new TypeError("fetch failed"));
      return Promise.resolve(
        new Response(JSON.stringify(okReport(body)), {
          status: 202,
          headers: { "content-type": "application/json" },
        }),
      );
    });

    const model = new HitListModel(payload(12), seqMinter());
    confirmFirst(model, 10);

    let landed = false;
    try {
      await api.submitLabels(model.buildBatch("coll"));
    } catch (err) {
      model.applyError(err);
    }
    const report = await api.submitLabels(model.buildBatch("coll"));
    landed = model.applyReport(report);

    expect(landed).toBe(true);
    expect(bodies).toHaveLength(2);
    expect(bodies[0]?.batch_id).toBe(bodies[1]?.batch_id);
    expect(bodies[1]?.events).toHaveLength(10);
  });
});

describe("staleness", () => {
  it("flags when the server model version advances", () => {
    const model = new HitListModel(payload(12, 3));
    model.noteServerVersion(3);
    expect(model.stale).toBe(false);
    model.noteServerVersion(4);
    expect(model.stale).toBe(true);
    expect(model.canSubmit).toBe(false);
  });

  it("treats hit-list rejects on submit as staleness", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 2);
    const batch = model.buildBatch("coll");
    const report = okReport(batch);
    model.applyReport({
      ...report,
      accepted: 0,
      accepted_event_ids: [],
      rejected: [
        { index: 0, zone_id: "z", reason: "zone not in current hit list" },
        { index: 1, zone_id: "y", reason: "no hit list for class amsterdam" },
      ],
    });
    expect(model.stale).toBe(true);
    expect(model.staleNote).toContain("hit list");
  });

  it("does not confuse unrelated rejects with staleness", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 1);
    const report = okReport(model.buildBatch("coll"));
    model.applyReport({
      ...report,
      rejected: [{ index: 0, zone_id: "z", reason: "unknown zone_id" }],
    });
    expect(model.stale).toBe(false);
  });

  it("maps a conflict response to staleness", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 1);
    model.applyError(new ApiError(409, "conflict", "conflicting actions"));
    expect(model.stale).toBe(true);
  });

  it("keeps the gesture id through a network failure", () => {
    const model = new HitListModel(payload(), seqMinter());
    confirmFirst(model, 1);
    const first = model.buildBatch("coll");
    model.applyError(new TypeError("fetch failed"));
    expect(model.stale).toBe(false);
    expect(model.buildBatch("coll").batch_id).toBe(first.batch_id);
  });
});
