/** Review-queue list rendering.
 *
 * Cards are rendered in exactly the order the server returns them; the
 * server already ranks pending items, so the client must not re-sort.
 */

import type { ReviewItemPayload } from "./api.js";
import { verbatim } from "./format.js";

function field(label: string, value: string, cls?: string): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "field" + (cls ? ` ${cls}` : "");
  const dt = document.createElement("span");
  dt.className = "field-label";
  dt.textContent = label;
  const dd = document.createElement("span");
  dd.className = "field-value";
  dd.textContent = value;
  wrap.append(dt, dd);
  return wrap;
}

export function renderReviewCard(item: ReviewItemPayload): HTMLElement {
  const card = document.createElement("article");
  card.className = `review-card status-${item.status}`;
  card.dataset.changeId = item.change_id;

  const head = document.createElement("header");
  const id = document.createElement("h3");
  id.className = "change-id";
  id.textContent = item.change_id;
  const status = document.createElement("span");
  status.className = "status-badge";
  status.textContent = item.status;
  head.append(id, status);
  card.append(head);

  const u = item.risk_score.uncertainty;
  const grid = document.createElement("div");
  grid.className = "field-grid";
  grid.append(
    field("probability", verbatim(item.risk_score.probability), "probability"),
    field("total uncertainty", verbatim(u.total), "u-total"),
    field("data uncertainty", verbatim(u.expected_data), "u-data"),
    field("knowledge uncertainty", verbatim(u.knowledge), "u-knowledge"),
    field("model version", verbatim(item.risk_score.model_version), "model-version"),
    field("enqueued", verbatim(item.enqueued_at_iso ?? item.enqueued_at), "enqueued"),
  );
  card.append(grid);

  const actions = document.createElement("div");
  actions.className = "verdict-actions";
  for (const label of ["risky", "normal"] as const) {
    const btn = document.createElement("button");
    btn.className = `verdict-button verdict-${label}`;
    btn.dataset.label = label;
    btn.textContent = `mark ${label}`;
    actions.append(btn);
  }
  card.append(actions);
  return card;
}

export function renderQueue(
  container: HTMLElement,
  items: ReviewItemPayload[],
): void {
  container.replaceChildren();
  if (items.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No pending reviews.";
    container.append(empty);
    return;
  }
  for (const item of items) {
    container.append(renderReviewCard(item));
  }
}

/** Flip an already-rendered card into its reviewed state. */
export function markReviewed(card: HTMLElement, label: string): void {
  card.classList.remove("status-pending");
  card.classList.add("status-reviewed");
  const badge = card.querySelector(".status-badge");
  if (badge) badge.textContent = `reviewed: ${label}`;
  for (const btn of card.querySelectorAll<HTMLButtonElement>(".verdict-button")) {
    btn.disabled = true;
  }
}
