/**
 * Review-queue state: optimistic decision updates reconciled against the
 * server. A rejected request reverts the optimistic change and surfaces the
 * error inline; a success that followed someone else's decision surfaces a
 * last-write-wins notice from the server history count.
 */

import type { ReviewApi } from "./api.js";
import { ApiError } from "./api.js";
import type { DecisionAction, ReviewRecord, ReviewStatus, ReviewType } from "./types.js";

const ACTION_TO_STATUS: Record<DecisionAction, ReviewStatus> = {
  approve: "approved",
  edit: "edited",
  reject: "rejected",
};

export interface DecisionOutcome {
  ok: boolean;
  /** set when the server reports earlier decisions by someone else */
  notice?: string;
  /** set when the request failed and the optimistic update was reverted */
  error?: string;
  record?: ReviewRecord;
}

/** Client-side validation mirroring the server rule; returns an error or null. */
export function validateEdit(text: string): string | null {
  return text.trim().length === 0 ? "edited answer must not be empty" : null;
}

export class ReviewQueueModel {
  records: ReviewRecord[] = [];

  constructor(private readonly api: ReviewApi) {}

  async load(type: ReviewType, status?: string): Promise<void> {
    const response = await this.api.queue(type, status);
    this.records = response.records;
  }

  find(id: string): ReviewRecord | undefined {
    return this.records.find((record) => record.id === id);
  }

  async decide(id: string, action: DecisionAction, editedText?: string): Promise<DecisionOutcome> {
    if (action === "edit") {
      const invalid = validateEdit(editedText ?? "");
      if (invalid) return { ok: false, error: invalid };
    }
    const record = this.find(id);
    if (!record) return { ok: false, error: `unknown record ${id}` };

    const previousStatus = record.status;
    record.status = ACTION_TO_STATUS[action]; // optimistic
    try {
      const response = await this.api.decide(id, {
        action,
        edited_text: action === "edit" ? editedText : null,
      });
      record.status = response.record.status; // reconcile with the server
      if (action === "edit") record.edited_answer = editedText;
      const outcome: DecisionOutcome = { ok: true, record: response.record };
      if (response.previous_decisions > 0) {
        outcome.notice =
          `record had ${response.previous_decisions} earlier decision(s); ` +
          "latest decision wins, full history is retained";
      }
      return outcome;
    } catch (error) {
      record.status = previousStatus; // revert the optimistic update
      const message = error instanceof ApiError ? error.detail : String(error);
      return { ok: false, error: message };
    }
  }

  pending(): ReviewRecord[] {
    return this.records.filter((record) => record.status === "pending");
  }
}
