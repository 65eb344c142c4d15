/** Verdict submission with idempotence guards.
 *
 * Two layers keep a double-click from producing two verdicts:
 *  - a per-change in-flight set so a second click while the first POST
 *    is outstanding is dropped without issuing a request, and
 *  - 409 DuplicateVerdict responses reconcile the card to its reviewed
 *    state instead of surfacing an error, since the verdict did land.
 */

import { ApiClient, ApiRequestError } from "./api.js";
import { markReviewed } from "./queue.js";

export class VerdictController {
  private readonly inFlight = new Set<string>();

  constructor(
    private readonly client: ApiClient,
    private readonly reviewerId: string,
    private readonly onError: (message: string) => void = () => {},
  ) {}

  /**
   * Submit a verdict for the card's change. Returns true when a request
   * was actually issued, false when it was suppressed by the guard.
   */
  async submit(
    card: HTMLElement,
    label: "risky" | "normal",
  ): Promise<boolean> {
    const changeId = card.dataset.changeId;
    if (!changeId || this.inFlight.has(changeId)) {
      return false;
    }
    this.inFlight.add(changeId);
    try {
      await this.client.submitVerdict(changeId, label, this.reviewerId);
      markReviewed(card, label);
    } catch (err) {
      if (err instanceof ApiRequestError && err.status === 409) {
        // the verdict already exists server-side; reconcile, don't error
        markReviewed(card, label);
      } else if (err instanceof ApiRequestError) {
        this.onError(`${err.body.error}: ${err.body.detail}`);
      } else {
        this.onError(String(err));
      }
    } finally {
      this.inFlight.delete(changeId);
    }
    return true;
  }
}
