/**
 * Guard for the blinding invariant: payloads rendered during evaluation must
 * never carry the alias-to-model mapping. The UI audits every case payload
 * before rendering and refuses to display anything that smells like a leak.
 */

import type { BlindedCase } from "./types.js";

const CASE_KEYS = new Set(["case_id", "prompt", "image_url", "answers", "submitted"]);
const ANSWER_KEYS = new Set(["alias", "text"]);
const LEAKY_KEY = /model|mapping|resolved|identity/i;

/** Returns a list of violations; empty means the payload is safe to render. */
export function auditBlindedCase(payload: BlindedCase, knownModels: string[] = []): string[] {
  const violations: string[] = [];
  for (const key of Object.keys(payload)) {
    if (!CASE_KEYS.has(key)) {
      violations.push(`unexpected case field "${key}"`);
    }
    if (LEAKY_KEY.test(key)) {
      violations.push(`suspicious case field "${key}"`);
    }
  }
  payload.answers.forEach((answer, index) => {
    for (const key of Object.keys(answer)) {
      if (!ANSWER_KEYS.has(key)) {
        violations.push(`unexpected answer field "${key}" at index ${index}`);
      }
    }
    if (knownModels.includes(answer.alias)) {
      violations.push(`alias "${answer.alias}" is a model identifier`);
    }
  });
  return violations;
}

export function assertBlinded(payload: BlindedCase, knownModels: string[] = []): void {
  const violations = auditBlindedCase(payload, knownModels);
  if (violations.length > 0) {
    throw new Error(`blinding violation: ${violations.join("; ")}`);
  }
}
