/**
 * Blinded scoring form model: per-alias accuracy/conciseness with a live
 * composite preview, optional multi-select preference, submission gated until
 * every shown answer is scored, and draft persistence across navigation.
 */

import { compositePreview, isValidScore } from "./composite.js";
import type { DraftStore } from "./drafts.js";
import type { BlindedCase, ScorePair, ScoresRequest } from "./types.js";

export type ScoreField = "accuracy" | "conciseness";

export class EvalFormModel {
  private scores = new Map<string, Partial<ScorePair>>();
  private preferred = new Set<string>();

  constructor(
    readonly blindedCase: BlindedCase,
    private readonly drafts?: DraftStore,
  ) {
    for (const answer of blindedCase.answers) {
      this.scores.set(answer.alias, {});
    }
    this.restoreDraft();
  }

  get aliases(): string[] {
    return this.blindedCase.answers.map((answer) => answer.alias);
  }

  /** Rejects out-of-range input at the UI boundary; valid input persists a draft. */
  setScore(alias: string, field: ScoreField, value: number): string | null {
    if (!this.scores.has(alias)) return `unknown alias ${alias}`;
    if (!isValidScore(value)) return "scores are integers from 1 to 5";
    this.scores.get(alias)![field] = value;
    this.persistDraft();
    return null;
  }

  getScore(alias: string, field: ScoreField): number | undefined {
    return this.scores.get(alias)?.[field];
  }

  /** Multi-select: any number of answers may be preferred, including none. */
  togglePreferred(alias: string): void {
    if (!this.scores.has(alias)) return;
    if (this.preferred.has(alias)) {
      this.preferred.delete(alias);
    } else {
      this.preferred.add(alias);
    }
    this.persistDraft();
  }

  isPreferred(alias: string): boolean {
    return this.preferred.has(alias);
  }

  previewFor(alias: string): number | null {
    const pair = this.scores.get(alias);
    if (!pair || !isValidScore(pair.accuracy) || !isValidScore(pair.conciseness)) return null;
    return compositePreview(pair.accuracy, pair.conciseness);
  }

  /** Submission stays disabled until all shown answers carry both scores. */
  get complete(): boolean {
    return [...this.scores.values()].every(
      (pair) => isValidScore(pair.accuracy) && isValidScore(pair.conciseness),
    );
  }

  get canSubmit(): boolean {
    return this.complete && !this.blindedCase.submitted;
  }

  buildSubmission(): ScoresRequest {
    if (!this.complete) {
      throw new Error("all shown answers must be scored before submitting");
    }
    const scores: Record<string, ScorePair> = {};
    for (const [alias, pair] of this.scores) {
      scores[alias] = { accuracy: pair.accuracy!, conciseness: pair.conciseness! };
    }
    return { scores, preferred: [...this.preferred].sort() };
  }

  clearDraft(): void {
    this.drafts?.clear(this.blindedCase.case_id);
  }

  private persistDraft(): void {
    this.drafts?.save(this.blindedCase.case_id, {
      scores: Object.fromEntries(this.scores),
      preferred: [...this.preferred].sort(),
    });
  }

  private restoreDraft(): void {
    const draft = this.drafts?.load(this.blindedCase.case_id);
    if (!draft) return;
    for (const [alias, pair] of Object.entries(draft.scores)) {
      if (!this.scores.has(alias)) continue;
      if (isValidScore(pair.accuracy)) this.scores.get(alias)!.accuracy = pair.accuracy;
      if (isValidScore(pair.conciseness)) this.scores.get(alias)!.conciseness = pair.conciseness;
    }
    for (const alias of draft.preferred) {
      if (this.scores.has(alias)) this.preferred.add(alias);
    }
  }
}
