/** DOM renderers for the three screens. Views are stateless: the app
 * re-renders after model changes. The one exception is text input, which
 * patches validation state in place so typing never loses focus.
 */

import type { HarvestPayload, Prospect } from "./api.js";
import { renderChart } from "./chart.js";
import { clear, el } from "./dom.js";
import type { HitListModel } from "./hitlist.js";
import type { ProspectQueue } from "./prospects.js";
import type { TranscribeModel } from "./transcribe.js";

export interface HitListHandlers {
  onSubmit: () => void;
  onReload: () => void;
  onSelect: (index: number) => void;
}

export function renderHitListView(
  doc: Document,
  container: Element,
  model: HitListModel,
  handlers: HitListHandlers,
): void {
  clear(container);
  const root = el(doc, "section", { class: "hitlist-view" });

  const marked = model.marked().length;
  root.append(
    el(doc, "header", { class: "view-header" }, [
      el(doc, "h2", { text: `hit list: ${model.label}` }),
      el(doc, "span", { class: "model-version", text: `model v${model.modelVersion}` }),
      el(doc, "span", { class: "mark-count", text: `${marked} marked` }),
    ]),
  );

  if (model.stale) {
    const reload = el(doc, "button", { class: "reload", text: "Reload hit list" });
    reload.addEventListener("click", handlers.onReload);
    root.append(
      el(doc, "div", { class: "banner stale", "data-role": "stale-banner" }, [
        el(doc, "span", { text: `Hit list is stale (${model.staleNote}). ` }),
        reload,
      ]),
    );
  }

  const submit = el(doc, "button", { class: "submit", text: `Submit ${marked} marks` });
  if (!model.canSubmit) submit.setAttribute("disabled", "");
  submit.addEventListener("click", handlers.onSubmit);
  const controls = el(doc, "div", { class: "controls" }, [submit]);
  if (model.lastReport !== null) {
    const r = model.lastReport;
    const note = r.duplicate
      ? `already submitted (batch replay), ${r.accepted} accepted`
      : `${r.accepted} accepted, ${r.rejected.length} rejected`;
    controls.append(el(doc, "span", { class: "submit-report", text: note }));
  }
  root.append(controls);

  const grid = el(doc, "div", { class: "tile-grid" });
  model.tiles.forEach((tile, index) => {
    const classes = ["tile", tile.mark];
    if (index === model.cursor) classes.push("cursor");
    if (tile.alreadyLabeled) classes.push("labeled");
    const fig = el(doc, "figure", { class: classes.join(" "), "data-zone": tile.zoneId }, [
      el(doc, "img", { src: tile.imageUrl, alt: `zone ${tile.zoneId}`, loading: "lazy" }),
      el(doc, "figcaption", {}, [
        el(doc, "span", { class: "score", text: tile.score.toFixed(2) }),
        el(doc, "span", {
          class: "state",
          text: tile.alreadyLabeled ? "labeled" : tile.mark,
        }),
      ]),
    ]);
    fig.addEventListener("click", () => handlers.onSelect(index));
    grid.append(fig);
  });
  root.append(grid);

  root.append(
    el(doc, "p", {
      class: "key-help",
      text: "j/k move, c confirm, x reject, enter submit",
    }),
  );
  container.append(root);
}

export interface TranscribeHandlers {
  onSubmit: () => void;
}

export function renderTranscribeView(
  doc: Document,
  container: Element,
  model: TranscribeModel,
  collectionId: string,
  handlers: TranscribeHandlers,
): void {
  clear(container);
  const root = el(doc, "section", { class: "transcribe-view" });
  root.append(
    el(doc, "header", { class: "view-header" }, [
      el(doc, "h2", { text: "transcribe lines" }),
      el(doc, "span", { class: "collection", text: collectionId }),
    ]),
  );

  const submit = el(doc, "button", { class: "submit" });
  const hints: (() => void)[] = [];
  const syncControls = () => {
    submit.textContent = `Submit ${model.validRows().length} words`;
    if (model.canSubmit) submit.removeAttribute("disabled");
    else submit.setAttribute("disabled", "");
    for (const update of hints) update();
  };
  submit.addEventListener("click", () => {
    if (model.canSubmit) handlers.onSubmit();
  });

  for (const [band, rows] of model.bands()) {
    const strip = el(doc, "section", { class: "line-strip", "data-band": String(band) }, [
      el(doc, "h3", { text: `line ${band}` }),
    ]);
    for (const row of rows) {
      // the zone image sits beside its text field, always
      const input = el(doc, "input", {
        type: "text",
        value: row.text,
        placeholder: "word",
        "data-zone": row.zoneId,
      });
      const hint = el(doc, "span", {
        class: "invalid-hint",
        text: "whitespace only",
        hidden: "",
      });
      const syncHint = () => {
        const bad = row.text.length > 0 && row.text.trim().length === 0;
        if (bad) hint.removeAttribute("hidden");
        else hint.setAttribute("hidden", "");
      };
      hints.push(syncHint);
      input.addEventListener("input", () => {
        model.setText(row.zoneId, input.value);
        syncControls();
      });
      strip.append(
        el(doc, "div", { class: "zone-cell", "data-zone": row.zoneId }, [
          el(doc, "img", { src: row.imageUrl, alt: `zone ${row.zoneId}` }),
          input,
          hint,
        ]),
      );
    }
    root.append(strip);
  }

  root.append(el(doc, "div", { class: "controls" }, [submit]));
  syncControls();
  container.append(root);
}

export interface DashboardState {
  collectionId: string | null;
  offline: boolean;
  harvest: HarvestPayload | null;
  queue: ProspectQueue;
}

export interface DashboardHandlers {
  onRetry: () => void;
  onOpenProspect: (classKey: string) => void;
  onApplyQueue: () => void;
}

export function renderDashboard(
  doc: Document,
  container: Element,
  state: DashboardState,
  handlers: DashboardHandlers,
): void {
  clear(container);
  const root = el(doc, "section", { class: "dashboard" });

  if (state.offline) {
    const retry = el(doc, "button", { class: "retry", text: "Retry" });
    retry.addEventListener("click", handlers.onRetry);
    root.append(
      el(doc, "div", { class: "banner offline", "data-role": "offline-banner" }, [
        el(doc, "span", { text: "Service unreachable. " }),
        retry,
      ]),
    );
  }

  const chartBox = el(doc, "section", { class: "chart-box" }, [
    el(doc, "h2", { text: "label harvesting" }),
  ]);
  if (state.harvest !== null) {
    chartBox.append(renderChart(doc, state.harvest));
  } else {
    chartBox.append(el(doc, "p", { class: "placeholder", text: "no data yet" }));
  }
  root.append(chartBox);

  const queueBox = el(doc, "section", { class: "queue-box" }, [
    el(doc, "h2", { text: "prospects" }),
  ]);
  if (state.queue.hasPendingUpdate) {
    const apply = el(doc, "button", {
      class: "queue-update",
      "data-role": "queue-update",
      text: "Queue changed on the server, refresh",
    });
    apply.addEventListener("click", handlers.onApplyQueue);
    queueBox.append(apply);
  }
  const list = el(doc, "ol", { class: "prospects" });
  for (const prospect of state.queue.rows) {
    const open = el(doc, "button", { class: "prospect", "data-class": prospect.class_key }, [
      el(doc, "span", { class: "prospect-key", text: prospect.class_key }),
      el(doc, "span", { class: "prospect-score", text: prospect.score.toFixed(3) }),
      el(doc, "span", {
        class: "prospect-parts",
        text: describeComponents(prospect),
      }),
    ]);
    open.addEventListener("click", () => handlers.onOpenProspect(prospect.class_key));
    list.append(el(doc, "li", {}, [open]));
  }
  if (state.queue.rows.length === 0) {
    queueBox.append(el(doc, "p", { class: "placeholder", text: "no trained classes yet" }));
  }
  queueBox.append(list);
  root.append(queueBox);
  container.append(root);
}

function describeComponents(p: Prospect): string {
  const c = p.components;
  return `eur ${c.eur.toFixed(3)}, pool ${c.near_boundary_count}, velocity ${c.label_velocity.toFixed(1)}`;
}
