/**
 * Composite-score preview shown next to the inputs. Must agree with what the
 * server stores: 0.75 * accuracy + 0.25 * conciseness over integer 1-5 scores.
 */

export const ACCURACY_WEIGHT = 0.75;
export const CONCISENESS_WEIGHT = 0.25;

export function isValidScore(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value) && value >= 1 && value <= 5;
}

export function compositePreview(accuracy: number, conciseness: number): number {
  if (!isValidScore(accuracy) || !isValidScore(conciseness)) {
    throw new RangeError(`scores must be integers in [1,5], got ${accuracy}, ${conciseness}`);
  }
  return ACCURACY_WEIGHT * accuracy + CONCISENESS_WEIGHT * conciseness;
}

/** "5" -> "5.0", 4.25 stays "4.25"; mirrors how the report prints composites. */
export function formatComposite(value: number): string {
  return Number.isInteger(value) ? `${value}.0` : String(value);
}
