"""Walkthrough: the review service driven in-process (no network needed).

Shows the review queue, an approve and an edit decision, the blinded expert
evaluation with multi-select preferences, and the audit endpoint. The same
endpoints back the browser frontend under frontend/.
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from surgdistill import builder, service
from surgdistill.config import PipelineConfig
from surgdistill.corpus import load_manifest
from surgdistill.minicorpus import build_mini_corpus
from surgdistill.privacy import AuditLog, PrivacyGate
from surgdistill.student import MockStudent
from surgdistill.teacher import MockTeacher
from surgdistill.templates import load_sft_templates

data_dir = Path("demo_output/service")
manifest = load_manifest(build_mini_corpus(data_dir / "corpus"))
config = PipelineConfig(target_resolution=(320, 180))
gate = PrivacyGate(AuditLog(data_dir / service.AUDIT_LOG_FILENAME))
records = builder.build_sft_dataset(
    manifest, [f.frame_id for f in manifest.frames], MockTeacher(), gate,
    load_sft_templates(), config, data_dir,
)
builder.build_preference_dataset(
    records, MockStudent(), MockTeacher(), gate, config, data_dir, seed=7, include_pending=True
)
cases = [
    {"case_id": f"case_{i}", "anatomy_class": r.anatomy_class, "cme_side": r.cme_side,
     "prompt": r.prompt, "reference": r.answer, "image_path": r.composite_path,
     "answers": {"base-vlm": "This is the mesentery.",
                 "sft-vlm": r.answer,
                 "dpo-vlm": f"The {r.anatomy_class.replace('_', ' ')} is highlighted."}}
    for i, r in enumerate(records[:3])
]
(data_dir / service.EVAL_CASES_FILENAME).write_text(
    "".join(json.dumps(c) + "\n" for c in cases), encoding="utf-8"
)

client = TestClient(service.create_app(data_dir))

queue = client.get("/api/review/queue?type=sft&status=pending").json()
print(f"review queue: {queue['count']} pending records")
first, second = queue["records"][0]["id"], queue["records"][1]["id"]

client.post(f"/api/review/{first}/decision", json={"action": "approve"},
            headers={"X-Reviewer-Id": "surgeon-1"})
client.post(f"/api/review/{second}/decision",
            json={"action": "edit", "edited_text": "Clarified expert answer."},
            headers={"X-Reviewer-Id": "surgeon-1"})
print(f"after decisions: {first} -> {client.get(f'/api/review/{first}').json()['status']}, "
      f"{second} -> {client.get(f'/api/review/{second}').json()['status']}")

blinded = client.get("/api/eval/cases").json()["cases"][0]
print(f"\nblinded case {blinded['case_id']}: aliases "
      f"{[a['alias'] for a in blinded['answers']]} (mapping hidden)")
scores = {a["alias"]: {"accuracy": 4, "conciseness": 5} for a in blinded["answers"]}
resolved = client.post(f"/api/eval/{blinded['case_id']}/scores",
                       json={"scores": scores, "preferred": ["A", "B"]}).json()["resolved"]
print(f"submitted scores; mapping revealed after persistence: {resolved}")

# No automated results on disk yet, so the report is the expert-only form.
report = client.get("/api/report").json()
print(f"\nexpert submissions: {report['expert_submissions']}, "
      f"preference counts: {report['preference_counts']}")
audit = client.get("/api/audit").json()["records"]
print(f"audit trail: {len(audit)} outbound-call records, "
      f"{sum(1 for r in audit if r['decision'] == 'allowed')} allowed")
