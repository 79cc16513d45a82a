"""Walkthrough: build the synthetic mini corpus, validate it, and split it.

The shipped corpus is a deterministic stand-in for the private clinical data:
4 procedures, 12 frames, one annotation per frame over five anatomy classes.
Splits are grouped by procedure so near-duplicate frames from one operation
never straddle the train/test boundary.
"""

from pathlib import Path

from surgdistill.corpus import load_manifest, split_corpus, validate_corpus
from surgdistill.minicorpus import build_mini_corpus

out = Path("demo_output/corpus")
manifest_path = build_mini_corpus(out)
print(f"corpus written to {out}\n")

manifest = load_manifest(manifest_path)
print(f"procedures:  {len(manifest.procedures)}")
print(f"frames:      {len(manifest.frames)}")
print(f"annotations: {len(manifest.annotations)}\n")

report = validate_corpus(manifest)
print("per-class annotation counts (declared vs actual):")
for cls, count in sorted(report.class_counts.items(), key=lambda kv: kv[0].value):
    marker = "  <-- mismatch" if count.mismatch else ""
    print(f"  {cls.display_name:<28} {count.declared:>3} vs {count.actual:>3}{marker}")

print("\nprocedure-grouped splits at test fraction 0.25:")
for seed in (7, 8, 9):
    train, test = split_corpus(manifest, seed=seed, test_fraction=0.25)
    test_procs = sorted({fid.rsplit("_", 1)[0] for fid in test})
    print(f"  seed {seed}: {len(train)} train / {len(test)} test, test procedures: {test_procs}")

print("\nsame seed twice is identical:",
      split_corpus(manifest, 7, 0.25) == split_corpus(manifest, 7, 0.25))
