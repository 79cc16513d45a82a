"""HTTP service behind the review UI: review queue, blinded expert evaluation,
report and audit views, all persisted through the append-only event log."""

from __future__ import annotations

import hashlib
import json
import random
import time
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import builder
from .events import EventLog, ExpertEvalSubmission, ReviewDecision
from .metrics import (
    AggregationError,
    EvalCase,
    ExpertDecision,
    aggregate,
    metric_result_from_dict,
)
from .privacy import AuditLog

EVENT_LOG_FILENAME = "events.log"
AUDIT_LOG_FILENAME = "audit.log"
EVAL_CASES_FILENAME = "eval_cases.jsonl"
EVAL_RESULTS_PATH = Path("eval") / "results.jsonl"

ALIAS_LETTERS = "ABCDEFGH"


class DecisionRequest(BaseModel):
    action: Literal["approve", "edit", "reject"]
    edited_text: str | None = None


class ScorePair(BaseModel):
    accuracy: int = Field(ge=1, le=5)
    conciseness: int = Field(ge=1, le=5)


class ScoresRequest(BaseModel):
    scores: dict[str, ScorePair]
    preferred: list[str] = []


def load_eval_cases(path: Path) -> list[EvalCase]:
    cases = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        cases.append(
            EvalCase(
                case_id=raw["case_id"],
                anatomy_class=raw.get("anatomy_class", ""),
                cme_side=raw.get("cme_side", "unspecified"),
                prompt=raw["prompt"],
                reference=raw["reference"],
                model_answers=raw["answers"],
                image_path=raw.get("image_path", ""),
            )
        )
    return cases


def blinding_permutation(case_id: str, dataset_digest: str, models: list[str]) -> dict[str, str]:
    """alias letter -> model, stable for (case, dataset) but opaque to the reviewer."""
    seed = int.from_bytes(
        hashlib.sha256(f"{case_id}:{dataset_digest}".encode("utf-8")).digest()[:8], "big"
    )
    shuffled = list(sorted(models))
    random.Random(seed).shuffle(shuffled)
    return {ALIAS_LETTERS[i]: model for i, model in enumerate(shuffled)}


def create_app(data_dir: str | Path, frontend_dir: str | Path | None = None) -> FastAPI:
    """Wire the service over datasets in data_dir; replays the event log eagerly
    (a corrupt log raises EventLogCorruptError and the service refuses to start)."""
    data_dir = Path(data_dir)
    event_log = EventLog(data_dir / EVENT_LOG_FILENAME)
    state = event_log.replay()

    sft_path = data_dir / builder.SFT_DATASET_FILENAME
    pref_path = data_dir / builder.PREF_DATASET_FILENAME
    sft_records = {r.id: r for r in builder.load_sft_dataset(sft_path)} if sft_path.exists() else {}
    pref_pairs = {}
    if pref_path.exists():
        loaded_pairs, _ = builder.load_pref_dataset(pref_path)
        pref_pairs = {p.id: p for p in loaded_pairs}

    cases_path = data_dir / EVAL_CASES_FILENAME
    eval_cases: dict[str, EvalCase] = {}
    dataset_digest = ""
    if cases_path.exists():
        dataset_digest = hashlib.sha256(cases_path.read_bytes()).hexdigest()
        eval_cases = {c.case_id: c for c in load_eval_cases(cases_path)}

    app = FastAPI(title="review service")

    def effective_status(record_id: str, stored_status: str) -> str:
        decision = state.decisions.get(record_id)
        if decision is None:
            return stored_status
        return {"approve": "approved", "edit": "edited", "reject": "rejected"}[decision.action]

    def record_view(record_id: str) -> dict:
        if record_id in sft_records:
            record = sft_records[record_id]
            decision = state.decisions.get(record_id)
            return {
                "id": record.id,
                "type": "sft",
                "frame_id": record.frame_id,
                "anatomy_class": record.anatomy_class,
                "prompt": record.prompt,
                "answer": record.answer,
                "edited_answer": decision.edited_text if decision and decision.action == "edit" else record.edited_answer,
                "phase": record.phase,
                "cme_side": record.cme_side,
                "status": effective_status(record.id, record.review_status.value),
                "image_url": f"/api/review/{record.id}/image",
            }
        if record_id in pref_pairs:
            pair = pref_pairs[record_id]
            return {
                "id": pair.id,
                "type": "pref",
                "sft_id": pair.sft_id,
                "prompt": pair.prompt,
                "accepted": pair.accepted,
                "rejected": pair.rejected,
                "candidates": [
                    {"text": c.text, "source": c.source} for c in pair.candidates
                ],
                "judge_rationale": pair.judge_rationale,
                "status": effective_status(pair.id, pair.review_status.value),
                "image_url": f"/api/review/{pair.id}/image",
            }
        raise HTTPException(status_code=404, detail=f"unknown record {record_id}")

    @app.get("/api/review/queue")
    def review_queue(type: str = "sft", status: str | None = None):
        ids = sorted(sft_records) if type == "sft" else sorted(pref_pairs)
        if type not in ("sft", "pref"):
            raise HTTPException(status_code=400, detail="type must be sft or pref")
        views = [record_view(rid) for rid in ids]
        if status:
            views = [v for v in views if v["status"] == status]
        return {"records": views, "count": len(views)}

    @app.get("/api/review/{record_id}")
    def review_record(record_id: str):
        view = record_view(record_id)
        view["history"] = [
            {"action": d.action, "reviewer_id": d.reviewer_id, "timestamp": d.timestamp}
            for d in state.decision_history.get(record_id, [])
        ]
        return view

    @app.post("/api/review/{record_id}/decision")
    def post_decision(
        record_id: str,
        request: DecisionRequest,
        x_reviewer_id: str = Header(default="anonymous"),
    ):
        if record_id not in sft_records and record_id not in pref_pairs:
            raise HTTPException(status_code=404, detail=f"unknown record {record_id}")
        if request.action == "edit" and not (request.edited_text or "").strip():
            raise HTTPException(status_code=400, detail="edit requires non-empty edited_text")
        previous = len(state.decision_history.get(record_id, []))
        decision = ReviewDecision(
            record_id=record_id,
            record_type="sft" if record_id in sft_records else "pref",
            reviewer_id=x_reviewer_id,
            action=request.action,
            edited_text=request.edited_text if request.action == "edit" else None,
            timestamp=time.time(),
        )
        event_log.append(decision)
        state.apply(decision)
        return {"record": record_view(record_id), "previous_decisions": previous}

    @app.get("/api/review/{record_id}/image")
    def review_image(record_id: str):
        view = record_view(record_id)
        source = sft_records.get(record_id) or pref_pairs.get(record_id)
        path = data_dir / source.composite_path
        if not path.is_file():
            raise HTTPException(status_code=404, detail="composite image missing")
        return FileResponse(path)

    # ---- blinded expert evaluation -------------------------------------

    def case_aliases(case: EvalCase) -> dict[str, str]:
        return blinding_permutation(case.case_id, dataset_digest, sorted(case.model_answers))

    @app.get("/api/eval/cases")
    def eval_case_list():
        views = []
        for case_id in sorted(eval_cases):
            case = eval_cases[case_id]
            mapping = case_aliases(case)
            views.append(
                {
                    "case_id": case.case_id,
                    "prompt": case.prompt,
                    "image_url": f"/api/eval/{case.case_id}/image" if case.image_path else None,
                    "answers": [
                        {"alias": alias, "text": case.model_answers[mapping[alias]]}
                        for alias in sorted(mapping)
                    ],
                    "submitted": case.case_id in state.submissions,
                }
            )
        return {"cases": views, "count": len(views)}

    @app.get("/api/eval/{case_id}/image")
    def eval_image(case_id: str):
        case = eval_cases.get(case_id)
        if case is None or not case.image_path:
            raise HTTPException(status_code=404, detail="no image for this case")
        path = data_dir / case.image_path
        if not path.is_file():
            raise HTTPException(status_code=404, detail="case image missing")
        return FileResponse(path)

    @app.post("/api/eval/{case_id}/scores")
    def post_scores(
        case_id: str,
        request: ScoresRequest,
        x_reviewer_id: str = Header(default="anonymous"),
    ):
        case = eval_cases.get(case_id)
        if case is None:
            raise HTTPException(status_code=404, detail=f"unknown case {case_id}")
        mapping = case_aliases(case)
        if set(request.scores) != set(mapping):
            raise HTTPException(
                status_code=400,
                detail=f"all served answers must be scored: expected aliases {sorted(mapping)}",
            )
        unknown = [alias for alias in request.preferred if alias not in mapping]
        if unknown:
            raise HTTPException(status_code=400, detail=f"unknown preferred aliases {unknown}")
        submission = ExpertEvalSubmission(
            case_id=case_id,
            reviewer_id=x_reviewer_id,
            scores={
                mapping[alias]: (pair.accuracy, pair.conciseness)
                for alias, pair in request.scores.items()
            },
            preferred_models=tuple(sorted({mapping[alias] for alias in request.preferred})),
            timestamp=time.time(),
        )
        event_log.append(submission)
        state.apply(submission)
        # Aliases resolve only now, after the submission is persisted.
        return {"ok": True, "resolved": mapping}

    @app.get("/api/eval/{case_id}/reveal")
    def reveal(case_id: str):
        case = eval_cases.get(case_id)
        if case is None:
            raise HTTPException(status_code=404, detail=f"unknown case {case_id}")
        if case_id not in state.submissions:
            raise HTTPException(status_code=409, detail="case not yet submitted")
        return {"case_id": case_id, "mapping": case_aliases(case)}

    # ---- report and audit ----------------------------------------------

    @app.get("/api/report")
    def report():
        results_path = data_dir / EVAL_RESULTS_PATH
        expert = [
            ExpertDecision(
                case_id=s.case_id,
                scores=dict(s.scores),
                preferred_models=s.preferred_models,
            )
            for s in state.submissions.values()
        ]
        if results_path.exists():
            results = [
                metric_result_from_dict(json.loads(line))
                for line in results_path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            try:
                return {"report": aggregate(results, expert).to_dict()}
            except AggregationError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
        if expert:
            counts: dict[str, int] = {}
            for decision in expert:
                for model in decision.preferred_models:
                    counts[model] = counts.get(model, 0) + 1
            return {"expert_submissions": len(expert), "preference_counts": counts}
        raise HTTPException(status_code=404, detail="no evaluation results or submissions yet")

    @app.get("/api/audit")
    def audit():
        log = AuditLog(data_dir / AUDIT_LOG_FILENAME)
        return {
            "records": [
                {
                    "timestamp": r.timestamp,
                    "purpose": r.purpose,
                    "destination": r.destination,
                    "digest": r.digest,
                    "payload_bytes": r.payload_bytes,
                    "decision": r.decision,
                    "rejection_reason": r.rejection_reason,
                }
                for r in log.read()
            ]
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
