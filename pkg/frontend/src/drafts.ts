/**
 * Local draft persistence for the evaluation form: navigating away mid-case
 * keeps the entered scores, and returning restores them. Storage is injected
 * so tests run without a browser.
 */

export interface EvalDraft {
  scores: Record<string, { accuracy?: number; conciseness?: number }>;
  preferred: string[];
}

export type StorageLike = Pick<Storage, "getItem" | "setItem" | "removeItem">;

export class DraftStore {
  constructor(
    private readonly storage: StorageLike,
    private readonly prefix = "surgdistill.eval-draft.",
  ) {}

  private key(caseId: string): string {
    return this.prefix + caseId;
  }

  save(caseId: string, draft: EvalDraft): void {
    this.storage.setItem(this.key(caseId), JSON.stringify(draft));
  }

  load(caseId: string): EvalDraft | null {
    const raw = this.storage.getItem(this.key(caseId));
    if (raw === null) return null;
    try {
      const parsed = JSON.parse(raw) as EvalDraft;
      if (typeof parsed !== "object" || parsed === null || !parsed.scores) return null;
      return { scores: parsed.scores, preferred: parsed.preferred ?? [] };
    } catch {
      return null; // a corrupt draft is silently dropped, never fatal
    }
  }

  clear(caseId: string): void {
    this.storage.removeItem(this.key(caseId));
  }
}

/** In-memory stand-in used by tests and non-browser environments. */
export class MemoryStorage implements StorageLike {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.has(key) ? this.map.get(key)! : null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
  removeItem(key: string): void {
    this.map.delete(key);
  }
}
