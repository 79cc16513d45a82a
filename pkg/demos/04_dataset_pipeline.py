"""Walkthrough: the two dataset-building steps plus the trainer export.

Step 1 turns every annotated frame into (composite image, instruction, teacher
answer). Step 2 samples five distinct student answers per record and lets the
teacher designate accepted/rejected against the ground truth. The export
writes only reviewed records along with the training hyperparameters.
"""

from dataclasses import replace
from pathlib import Path

from surgdistill import builder
from surgdistill.config import PipelineConfig, TrainerExportConfig
from surgdistill.corpus import load_manifest, split_corpus
from surgdistill.minicorpus import build_mini_corpus
from surgdistill.privacy import AuditLog, PrivacyGate
from surgdistill.student import MockStudent
from surgdistill.teacher import MockTeacher
from surgdistill.templates import load_sft_templates, template_texts

out = Path("demo_output/pipeline")
manifest = load_manifest(build_mini_corpus(out / "corpus"))
config = PipelineConfig()
gate = PrivacyGate(AuditLog(out / "audit.log"))
train_ids, _ = split_corpus(manifest, seed=7, test_fraction=config.test_fraction)

records = builder.build_sft_dataset(
    manifest, train_ids, MockTeacher(), gate, load_sft_templates(), config, out
)
print(f"step 1: {len(records)} instruction records")
sample = records[0]
print(f"  prompt:  {sample.prompt}")
print(f"  answer:  {sample.answer[:96]}...")
print(f"  status:  {sample.review_status.value}\n")

pairs, failures = builder.build_preference_dataset(
    records, MockStudent(), MockTeacher(), gate, config, out, seed=7, include_pending=True
)
print(f"step 2: {len(pairs)} preference pairs, {len(failures)} failures")
pair = pairs[0]
print(f"  candidates: {len(pair.candidates)} "
      f"({[c.source for c in pair.candidates].count('student')} student + ground truth)")
print(f"  accepted:   {pair.accepted[:72]}...")
print(f"  rejected:   {pair.rejected[:72]}...")
print(f"  rationale:  {pair.judge_rationale}\n")

reviewed_records = [replace(r, review_status=builder.ReviewStatus.APPROVED) for r in records]
reviewed_pairs = [replace(p, review_status=builder.ReviewStatus.APPROVED) for p in pairs]
snapshot = builder.export_trainer_bundle(
    reviewed_records, reviewed_pairs, TrainerExportConfig(), config, template_texts(),
    out / "export", created_at="2026-01-01T00:00:00+00:00",
)
print(f"export: dataset {snapshot.dataset_id}, counts {snapshot.record_counts}")
print((out / "export" / "training_config.txt").read_text())
