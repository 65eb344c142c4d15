/** Application bootstrap: wire the queue, verdict buttons, and charts
 * to the /v1 API, polling for updates between user interactions.
 */

import { ApiClient } from "./api.js";
import { renderCharts } from "./charts.js";
import { verbatim } from "./format.js";
import { renderQueue } from "./queue.js";
import { VerdictController } from "./verdicts.js";

const POLL_MS = 10_000;

function setBanner(el: HTMLElement, message: string | null): void {
  if (message === null) {
    el.hidden = true;
    el.textContent = "";
  } else {
    el.hidden = false;
    el.textContent = message;
  }
}

export function startApp(root: Document = document): void {
  const queueEl = root.getElementById("review-queue");
  const chartsEl = root.getElementById("metrics-charts");
  const summaryEl = root.getElementById("metrics-summary");
  const bannerEl = root.getElementById("connectivity-banner");
  if (!queueEl || !chartsEl || !summaryEl || !bannerEl) {
    throw new Error("missing application containers in index.html");
  }

  const client = new ApiClient();
  const verdicts = new VerdictController(client, "ui-reviewer", (msg) =>
    setBanner(bannerEl, msg),
  );

  queueEl.addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement | null;
    const btn = target?.closest<HTMLButtonElement>(".verdict-button");
    const card = btn?.closest<HTMLElement>(".review-card");
    if (!btn || !card || btn.disabled) return;
    const label = btn.dataset.label === "risky" ? "risky" : "normal";
    void verdicts.submit(card, label);
  });

  let interacting = false;
  queueEl.addEventListener("pointerdown", () => {
    interacting = true;
  });
  root.addEventListener("pointerup", () => {
    interacting = false;
  });

  async function refresh(): Promise<void> {
    try {
      const [reviews, metrics] = await Promise.all([
        client.listPendingReviews(),
        client.metrics(),
      ]);
      setBanner(bannerEl!, null);
      // never rebuild the list under the user's pointer
      if (!interacting) {
        renderQueue(queueEl!, reviews.reviews);
      }
      renderCharts(chartsEl!, metrics.monthly);
      summaryEl!.textContent =
        `active model ${verbatim(metrics.active_version)} · ` +
        `threshold ${verbatim(metrics.operating_threshold)} · ` +
        `${verbatim(metrics.n_pending_reviews)} pending · ` +
        `${verbatim(metrics.n_verdicts)} verdicts · ` +
        `agreement ${verbatim(metrics.man_machine_agreement)}`;
    } catch {
      setBanner(bannerEl!, "Cannot reach the service; retrying…");
    }
  }

  void refresh();
  setInterval(() => void refresh(), POLL_MS);
}

if (typeof window !== "undefined" && document.getElementById("review-queue")) {
  startApp();
}
