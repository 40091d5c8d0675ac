/** Annotation queue state machine.
 *
 * Cards move pending -> submitting -> answered, one-way, with a single
 * exception: a failed submit rolls the card back to "failed" so it can be
 * retried.  A 409 from the server means someone already answered the item;
 * the card is reconciled as answered (flagged duplicate) and the ledger is
 * untouched.
 */

import { ApiClient, ApiError, QueueItemPayload, Verdict } from "./api.js";

export type CardState = "pending" | "submitting" | "answered" | "failed";

export interface Card {
  item: QueueItemPayload;
  state: CardState;
  duplicate: boolean;
  error: string | null;
}

export class QueueModel {
  cards: Card[] = [];

  constructor(private readonly api: ApiClient) {}

  /** Replace the card list with the server's current pending items. */
  async load(limit = 20): Promise<void> {
    const { items } = await this.api.queue(limit);
    this.cards = items.map((item) => ({
      item, state: "pending" as CardState, duplicate: false, error: null,
    }));
  }

  pending(): Card[] {
    return this.cards.filter((c) => c.state === "pending" || c.state === "failed");
  }

  next(): Card | undefined {
    return this.pending()[0];
  }

  drained(): boolean {
    return this.pending().length === 0;
  }

  /**
   * Submit one verdict.  Resolves to the card's final state; throws only on
   * programmer error (unknown id / double submit while in flight).
   */
  async submit(itemId: number, verdict: Verdict): Promise<CardState> {
    const card = this.cards.find((c) => c.item.item_id === itemId);
    if (!card) {
      throw new Error(`no card for item ${itemId}`);
    }
    if (card.state === "answered" || card.state === "submitting") {
      throw new Error(`item ${itemId} is ${card.state}`);
    }
    card.state = "submitting";
    card.error = null;
    try {
      await this.api.feedback(itemId, verdict);
      card.state = "answered";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        card.state = "answered";       // already answered elsewhere: reconcile
        card.duplicate = true;
      } else {
        card.state = "failed";         // rollback; the card stays re-submittable
        card.error = err instanceof Error ? err.message : String(err);
      }
    }
    return card.state;
  }
}
