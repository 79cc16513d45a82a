import { describe, expect, it } from "vitest";

import { DraftStore, MemoryStorage } from "../src/drafts.js";
import { EvalFormModel } from "../src/evalForm.js";
import type { BlindedCase } from "../src/types.js";

function blindedCase(overrides: Partial<BlindedCase> = {}): BlindedCase {
  return {
    case_id: "case_00",
    prompt: "Identify the highlighted structure.",
    image_url: null,
    answers: [
      { alias: "A", text: "first answer" },
      { alias: "B", text: "second answer" },
      { alias: "C", text: "third answer" },
    ],
    submitted: false,
    ...overrides,
  };
}

describe("EvalFormModel", () => {
  it("gates submission until every shown answer is fully scored", () => {
    const form = new EvalFormModel(blindedCase());
    expect(form.canSubmit).toBe(false);
    for (const alias of ["A", "B"]) {
      form.setScore(alias, "accuracy", 4);
      form.setScore(alias, "conciseness", 3);
    }
    expect(form.complete).toBe(false);
    form.setScore("C", "accuracy", 5);
    expect(form.canSubmit).toBe(false); // conciseness for C still missing
    form.setScore("C", "conciseness", 5);
    expect(form.complete).toBe(true);
    expect(form.canSubmit).toBe(true);
  });

  it("never allows submission of an already-submitted case", () => {
    const form = new EvalFormModel(blindedCase({ submitted: true }));
    for (const alias of ["A", "B", "C"]) {
      form.setScore(alias, "accuracy", 3);
      form.setScore(alias, "conciseness", 3);
    }
    expect(form.complete).toBe(true);
    expect(form.canSubmit).toBe(false);
  });

  it("blocks out-of-range input client-side", () => {
    const form = new EvalFormModel(blindedCase());
    expect(form.setScore("A", "accuracy", 6)).toMatch(/1 to 5/);
    expect(form.setScore("A", "accuracy", 0)).toMatch(/1 to 5/);
    expect(form.getScore("A", "accuracy")).toBeUndefined();
    expect(form.setScore("A", "accuracy", 5)).toBeNull();
  });

  it("previews the composite live once both scores exist", () => {
    const form = new EvalFormModel(blindedCase());
    expect(form.previewFor("A")).toBeNull();
    form.setScore("A", "accuracy", 5);
    expect(form.previewFor("A")).toBeNull();
    form.setScore("A", "conciseness", 5);
    expect(form.previewFor("A")).toBe(5.0);
  });

  it("treats preference as optional multi-select", () => {
    const form = new EvalFormModel(blindedCase());
    for (const alias of ["A", "B", "C"]) {
      form.setScore(alias, "accuracy", 4);
      form.setScore(alias, "conciseness", 4);
    }
    expect(form.buildSubmission().preferred).toEqual([]); // none is legal
    form.togglePreferred("A");
    form.togglePreferred("C");
    expect(form.buildSubmission().preferred).toEqual(["A", "C"]); // several are legal
    form.togglePreferred("A");
    expect(form.buildSubmission().preferred).toEqual(["C"]);
  });

  it("builds the exact request shape the service expects", () => {
    const form = new EvalFormModel(blindedCase());
    for (const [index, alias] of ["A", "B", "C"].entries()) {
      form.setScore(alias, "accuracy", index + 2);
      form.setScore(alias, "conciseness", 5 - index);
    }
    expect(form.buildSubmission()).toEqual({
      scores: {
        A: { accuracy: 2, conciseness: 5 },
        B: { accuracy: 3, conciseness: 4 },
        C: { accuracy: 4, conciseness: 3 },
      },
      preferred: [],
    });
  });

  it("refuses to build an incomplete submission", () => {
    const form = new EvalFormModel(blindedCase());
    form.setScore("A", "accuracy", 3);
    expect(() => form.buildSubmission()).toThrow(/must be scored/);
  });

  it("persists drafts and restores them on return", () => {
    const drafts = new DraftStore(new MemoryStorage());
    const first = new EvalFormModel(blindedCase(), drafts);
    first.setScore("A", "accuracy", 4);
    first.setScore("A", "conciseness", 2);
    first.togglePreferred("B");
    // Navigating away and back constructs a fresh model over the same storage.
    const second = new EvalFormModel(blindedCase(), drafts);
    expect(second.getScore("A", "accuracy")).toBe(4);
    expect(second.getScore("A", "conciseness")).toBe(2);
    expect(second.isPreferred("B")).toBe(true);
    second.clearDraft();
    const third = new EvalFormModel(blindedCase(), drafts);
    expect(third.getScore("A", "accuracy")).toBeUndefined();
  });

  it("ignores corrupt drafts", () => {
    const storage = new MemoryStorage();
    storage.setItem("surgdistill.eval-draft.case_00", "{not json");
    const form = new EvalFormModel(blindedCase(), new DraftStore(storage));
    expect(form.getScore("A", "accuracy")).toBeUndefined();
  });
});
