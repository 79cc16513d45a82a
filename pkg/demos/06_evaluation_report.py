"""Walkthrough: scoring answers with the automated harness and rendering the
report table: n-gram overlap, embedding similarity, judge composite, the
laterality lint, and multi-select expert preferences.
"""

from surgdistill.metrics import (
    ExpertDecision,
    HashEmbedder,
    MetricResult,
    aggregate,
    bleu4,
    embed_f1,
    laterality_check,
    render_report_text,
)
from surgdistill.privacy import sanitize
from surgdistill.teacher import MockTeacher, build_judge_quality_payload

reference = "The highlighted structure is the duodenum, shielded from traction injury."
answers = {
    "base": "This is the mesentery.",
    "sft": "The highlighted structure is the duodenum, shielded from traction injury.",
    "dpo": "The duodenum is highlighted here during right-sided CME and must be shielded.",
}

embedder = HashEmbedder()
teacher = MockTeacher()
results = []
for model, answer in sorted(answers.items()):
    judge = teacher.judge_quality(
        sanitize(build_judge_quality_payload(answer, reference, prompt="identify"))
    )
    lat = laterality_check(answer, side="left")
    results.append(
        MetricResult(
            case_id="case_00", model=model, anatomy_class="duodenum",
            bleu4=bleu4(answer, reference), embed_f1=embed_f1(answer, reference, embedder),
            judge=judge, laterality_flag=lat.flagged,
        )
    )
    flag = f"  laterality: {lat.matched_phrase!r}" if lat.flagged else ""
    print(f"{model:<5} bleu {results[-1].bleu4:.3f}  embed {results[-1].embed_f1:.3f}  "
          f"judge {judge.composite:.2f}{flag}")

decisions = [ExpertDecision("case_00", {m: (4, 4) for m in answers}, ("sft", "dpo"))]
print("\n" + render_report_text(aggregate(results, decisions)))
