"""Pipeline orchestration: instruction dataset (step 1), preference dataset
(step 2), review-state handling, and trainer-bundle export.

All dataset files are line-delimited JSON with canonical key order and
relative paths, so identical inputs and seeds reproduce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .config import PipelineConfig, TrainerExportConfig, config_digest_payload
from .corpus import CorpusManifest
from .imaging import EmptyMaskError, compose_overlay, load_mask_raster, save_composite, summarize_mask
from .privacy import GateRejection, PrivacyGate
from .student import CandidateAnswer, DegenerateSamplingError, SamplingConfig, sample_distinct
from .teacher import (
    EmptyCompletionError,
    TeacherRequestError,
    VerdictParseError,
    build_judge_pair_payload,
    build_synthesize_payload,
)
from .templates import PromptTemplate
from .text import stable_hash64

logger = logging.getLogger(__name__)

SFT_DATASET_FILENAME = "sft_dataset.jsonl"
PREF_DATASET_FILENAME = "pref_dataset.jsonl"
COMPOSITES_DIRNAME = "composites"


class ExportError(RuntimeError):
    """Nothing exportable after review filtering."""


class ReviewStatus(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    EDITED = "edited"
    REJECTED = "rejected"
    FAILED = "failed"  # generation/judging failure; kept for audit, never exported


EXPORTABLE_STATUSES = (ReviewStatus.APPROVED, ReviewStatus.EDITED)


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True)
class SftExample:
    id: str
    frame_id: str
    anatomy_class: str
    composite_path: str  # relative to the dataset root
    prompt: str
    template_id: str
    answer: str
    teacher_model: str
    review_status: ReviewStatus
    edited_answer: str | None
    phase: str
    cme_side: str

    def __post_init__(self):
        if self.review_status is ReviewStatus.EDITED and not self.edited_answer:
            raise ValueError("edited records must carry edited_answer")

    @property
    def effective_answer(self) -> str:
        return self.edited_answer if self.review_status is ReviewStatus.EDITED else self.answer

    def to_line(self) -> str:
        return _dump(
            {
                "id": self.id,
                "frame_id": self.frame_id,
                "anatomy_class": self.anatomy_class,
                "composite_path": self.composite_path,
                "prompt": self.prompt,
                "template_id": self.template_id,
                "answer": self.answer,
                "teacher_model": self.teacher_model,
                "review_status": self.review_status.value,
                "edited_answer": self.edited_answer,
                "phase": self.phase,
                "cme_side": self.cme_side,
            }
        )

    @staticmethod
    def from_line(line: str) -> "SftExample":
        raw = json.loads(line)
        raw["review_status"] = ReviewStatus(raw["review_status"])
        return SftExample(**raw)


@dataclass(frozen=True)
class PreferencePair:
    id: str
    sft_id: str
    prompt: str
    composite_path: str
    candidates: tuple[CandidateAnswer, ...]  # students in ladder order, ground truth last
    accepted: str
    rejected: str
    judge_rationale: str
    review_status: ReviewStatus

    def __post_init__(self):
        if self.accepted == self.rejected:
            raise ValueError("accepted and rejected answers must differ")
        texts = [c.text for c in self.candidates]
        if self.accepted not in texts:
            raise ValueError("accepted answer must appear in the candidate list")
        student_texts = [c.text for c in self.candidates if c.source == "student"]
        if self.rejected not in student_texts:
            raise ValueError("rejected answer must be a student candidate")

    def to_line(self) -> str:
        return _dump(
            {
                "id": self.id,
                "sft_id": self.sft_id,
                "prompt": self.prompt,
                "composite_path": self.composite_path,
                "candidates": [
                    {
                        "text": c.text,
                        "temperature": c.sampling.temperature if c.sampling else None,
                        "top_p": c.sampling.top_p if c.sampling else None,
                        "seed": c.sampling.seed if c.sampling else None,
                        "source": c.source,
                    }
                    for c in self.candidates
                ],
                "accepted": self.accepted,
                "rejected": self.rejected,
                "judge_rationale": self.judge_rationale,
                "review_status": self.review_status.value,
            }
        )

    @staticmethod
    def from_line(line: str) -> "PreferencePair":
        raw = json.loads(line)
        candidates = tuple(
            CandidateAnswer(
                text=c["text"],
                sampling=None
                if c["source"] == "ground_truth"
                else SamplingConfig(
                    temperature=c["temperature"], top_p=c["top_p"], seed=c["seed"]
                ),
                source=c["source"],
            )
            for c in raw["candidates"]
        )
        return PreferencePair(
            id=raw["id"],
            sft_id=raw["sft_id"],
            prompt=raw["prompt"],
            composite_path=raw["composite_path"],
            candidates=candidates,
            accepted=raw["accepted"],
            rejected=raw["rejected"],
            judge_rationale=raw["judge_rationale"],
            review_status=ReviewStatus(raw["review_status"]),
        )


@dataclass(frozen=True)
class DatasetSnapshot:
    dataset_id: str
    created_at: str
    config_digest: str
    record_counts: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset_id": self.dataset_id,
                "created_at": self.created_at,
                "config_digest": self.config_digest,
                "record_counts": self.record_counts,
            },
            sort_keys=True,
            indent=2,
        ) + "\n"


# ---------------------------------------------------------------------------
# Step 1: instruction dataset.

def build_sft_dataset(
    manifest: CorpusManifest,
    frame_ids: Sequence[str],
    teacher,
    gate: PrivacyGate,
    templates: Sequence[PromptTemplate],
    config: PipelineConfig,
    out_dir: str | Path,
) -> list[SftExample]:
    """One pending record per non-empty annotation on the given frames.

    Composites are written under out_dir/composites; the teacher is reached
    only through the privacy gate with the mask summary and text labels.
    Empty masks are skipped with a warning; teacher failures become records
    with review_status=failed so nothing disappears silently.
    """
    if not templates:
        raise ValueError("template set must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame_set = set(frame_ids)
    annotations = sorted(
        (a for a in manifest.annotations if a.frame_id in frame_set),
        key=lambda a: a.annotation_id,
    )
    records: list[SftExample] = []
    for index, ann in enumerate(annotations):
        frame = manifest.frame(ann.frame_id)
        procedure = manifest.procedure(frame.procedure_id)
        template = templates[index % len(templates)]
        mask = load_mask_raster(ann.mask_path)
        try:
            summary = summarize_mask(mask, config.grid_size, config.grid_cell_threshold)
        except EmptyMaskError:
            logger.warning("annotation %s has an empty mask; skipped", ann.annotation_id)
            continue
        with Image.open(frame.image_path) as img:
            frame_raster = np.asarray(img.convert("RGB"))
        composite = compose_overlay(
            frame_raster,
            mask,
            config.overlay_color,
            config.overlay_alpha,
            config.target_resolution,
            frame_id=frame.frame_id,
        )
        composite_abs = save_composite(composite, out_dir / COMPOSITES_DIRNAME, ann.anatomy_class.value)
        composite_rel = str(composite_abs.relative_to(out_dir))

        display = ann.anatomy_class.display_name
        status, answer, teacher_model = ReviewStatus.PENDING, "", getattr(teacher, "model", "")
        try:
            payload = build_synthesize_payload(
                anatomy=display,
                phase=procedure.phase_label,
                cme_side=procedure.cme_side.value,
                template_id=template.template_id,
                mask_summary=summary,
            )
            sanitized = gate.submit(payload, destination=teacher_model or "teacher")
            answer = teacher.synthesize_answer(sanitized)
        except (TeacherRequestError, EmptyCompletionError, GateRejection) as exc:
            logger.error("teacher call failed for %s: %s", ann.annotation_id, exc)
            status = ReviewStatus.FAILED
        records.append(
            SftExample(
                id=f"sft-{ann.annotation_id}",
                frame_id=frame.frame_id,
                anatomy_class=ann.anatomy_class.value,
                composite_path=composite_rel,
                prompt=template.text,
                template_id=template.template_id,
                answer=answer,
                teacher_model=teacher_model,
                review_status=status,
                edited_answer=None,
                phase=procedure.phase_label,
                cme_side=procedure.cme_side.value,
            )
        )
    records.sort(key=lambda r: r.id)
    write_sft_dataset(records, out_dir / SFT_DATASET_FILENAME)
    return records


def write_sft_dataset(records: Sequence[SftExample], path: str | Path) -> None:
    Path(path).write_text(
        "".join(r.to_line() + "\n" for r in sorted(records, key=lambda r: r.id)), encoding="utf-8"
    )


def load_sft_dataset(path: str | Path) -> list[SftExample]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [SftExample.from_line(line) for line in lines if line.strip()]


# ---------------------------------------------------------------------------
# Step 2: preference dataset.

def build_preference_dataset(
    sft_records: Sequence[SftExample],
    student,
    teacher,
    gate: PrivacyGate,
    config: PipelineConfig,
    dataset_root: str | Path,
    seed: int,
    include_pending: bool = False,
) -> tuple[list[PreferencePair], list[dict]]:
    """Sample candidates per reviewed record and let the teacher pick the pair.

    Eligible records are approved/edited (plus pending when include_pending,
    for unreviewed partial-supervision runs). Degenerate or degraded sampling
    and invalid verdicts become failure entries instead of pairs.
    """
    dataset_root = Path(dataset_root)
    eligible_statuses = set(EXPORTABLE_STATUSES) | ({ReviewStatus.PENDING} if include_pending else set())
    pairs: list[PreferencePair] = []
    failures: list[dict] = []
    for record in sorted(sft_records, key=lambda r: r.id):
        if record.review_status not in eligible_statuses or not record.effective_answer:
            continue
        ground_truth = record.effective_answer
        pair_id = f"pref-{record.id}"
        base = SamplingConfig(seed=stable_hash64(f"{seed}|{record.id}") % 2**31)
        try:
            candidates, degraded = sample_distinct(
                student,
                dataset_root / record.composite_path,
                record.prompt,
                config.candidates_per_prompt,
                base,
            )
        except DegenerateSamplingError as exc:
            logger.warning("record %s skipped: %s", record.id, exc)
            failures.append({"id": pair_id, "sft_id": record.id, "failure": "degenerate_sampling"})
            continue
        if degraded:
            logger.warning("record %s degraded: only %d distinct candidates", record.id, len(candidates))
            failures.append({"id": pair_id, "sft_id": record.id, "failure": "degraded_sampling"})
            continue
        try:
            payload = build_judge_pair_payload(
                student_answers=[c.text for c in candidates],
                ground_truth=ground_truth,
                prompt=record.prompt,
                anatomy=record.anatomy_class,
                phase=record.phase,
                cme_side=record.cme_side,
            )
            sanitized = gate.submit(payload, destination=getattr(teacher, "model", "teacher"))
            verdict = teacher.judge_pair(sanitized)
            everyone = list(candidates) + [
                CandidateAnswer(text=ground_truth, sampling=None, source="ground_truth")
            ]
            if not 0 <= verdict.accepted_index < len(everyone):
                raise VerdictParseError(f"accepted index {verdict.accepted_index} out of range")
            if not 0 <= verdict.rejected_index < len(candidates):
                raise VerdictParseError(f"rejected index {verdict.rejected_index} not a student")
            pairs.append(
                PreferencePair(
                    id=pair_id,
                    sft_id=record.id,
                    prompt=record.prompt,
                    composite_path=record.composite_path,
                    candidates=tuple(everyone),
                    accepted=everyone[verdict.accepted_index].text,
                    rejected=candidates[verdict.rejected_index].text,
                    judge_rationale=verdict.rationale,
                    review_status=ReviewStatus.PENDING,
                )
            )
        except (VerdictParseError, TeacherRequestError, EmptyCompletionError, GateRejection) as exc:
            logger.error("judging failed for %s: %s", record.id, exc)
            failures.append({"id": pair_id, "sft_id": record.id, "failure": "invalid_verdict"})
    write_pref_dataset(pairs, failures, dataset_root / PREF_DATASET_FILENAME)
    return pairs, failures


def write_pref_dataset(
    pairs: Sequence[PreferencePair], failures: Sequence[dict], path: str | Path
) -> None:
    entries = [(p.id, p.to_line()) for p in pairs]
    entries += [
        (f["id"], _dump({**f, "review_status": ReviewStatus.FAILED.value})) for f in failures
    ]
    entries.sort()
    Path(path).write_text("".join(line + "\n" for _, line in entries), encoding="utf-8")


def load_pref_dataset(path: str | Path) -> tuple[list[PreferencePair], list[dict]]:
    pairs, failures = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        if raw.get("failure"):
            failures.append(raw)
        else:
            pairs.append(PreferencePair.from_line(line))
    return pairs, failures


# ---------------------------------------------------------------------------
# Review application and export.

def apply_review_decisions(records: Sequence, decisions: Mapping[str, tuple[str, str | None]]):
    """Re-status records from (action, edited_text) decisions; latest wins upstream.

    Works for both SftExample and PreferencePair sequences.
    """
    action_to_status = {
        "approve": ReviewStatus.APPROVED,
        "edit": ReviewStatus.EDITED,
        "reject": ReviewStatus.REJECTED,
    }
    updated = []
    for record in records:
        decision = decisions.get(record.id)
        if decision is None:
            updated.append(record)
            continue
        action, edited_text = decision
        status = action_to_status[action]
        if isinstance(record, SftExample):
            updated.append(
                replace(record, review_status=status, edited_answer=edited_text if action == "edit" else record.edited_answer)
            )
        else:
            # Preference pairs support approve/reject; an edit replaces the accepted text.
            if action == "edit" and edited_text:
                updated.append(
                    replace(
                        record,
                        review_status=status,
                        candidates=record.candidates
                        + (CandidateAnswer(text=edited_text, sampling=None, source="ground_truth"),),
                        accepted=edited_text,
                    )
                )
            else:
                updated.append(replace(record, review_status=status))
    return updated


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def export_trainer_bundle(
    sft_records: Sequence[SftExample],
    pref_pairs: Sequence[PreferencePair],
    trainer_config: TrainerExportConfig,
    pipeline_config: PipelineConfig,
    template_texts: Mapping[str, str],
    out_dir: str | Path,
    created_at: str | None = None,
) -> DatasetSnapshot:
    """Write reviewed records, the training-config document, and a snapshot.

    Only approved/edited records are exported; edited answers replace the
    originals. Passing created_at pins the snapshot timestamp so repeated
    runs are byte-identical.
    """
    if trainer_config.dpo_beta != pipeline_config.dpo_beta:
        raise ValueError(
            f"trainer dpo_beta {trainer_config.dpo_beta} != pipeline {pipeline_config.dpo_beta}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    export_sft = [r for r in sorted(sft_records, key=lambda r: r.id) if r.review_status in EXPORTABLE_STATUSES]
    export_pref = [p for p in sorted(pref_pairs, key=lambda p: p.id) if p.review_status in EXPORTABLE_STATUSES]
    if not export_sft and not export_pref:
        raise ExportError("no approved or edited records to export")

    sft_lines = "".join(
        _dump(
            {
                "id": r.id,
                "image_path": r.composite_path,
                "prompt": r.prompt,
                "answer": r.effective_answer,
                "class": r.anatomy_class,
                "phase": r.phase,
                "side": r.cme_side,
                "review_status": r.review_status.value,
                "teacher_model": r.teacher_model,
            }
        )
        + "\n"
        for r in export_sft
    )
    pref_lines = "".join(
        _dump(
            {
                "id": p.id,
                "sft_id": p.sft_id,
                "image_path": p.composite_path,
                "prompt": p.prompt,
                "accepted": p.accepted,
                "rejected": p.rejected,
                "candidates": [
                    {
                        "text": c.text,
                        "temperature": c.sampling.temperature if c.sampling else None,
                        "top_p": c.sampling.top_p if c.sampling else None,
                        "seed": c.sampling.seed if c.sampling else None,
                        "source": c.source,
                    }
                    for c in p.candidates
                ],
                "judge_rationale": p.judge_rationale,
                "review_status": p.review_status.value,
            }
        )
        + "\n"
        for p in export_pref
    )
    config_text = trainer_config.to_flat_text()
    (out_dir / "sft.jsonl").write_text(sft_lines, encoding="utf-8")
    (out_dir / "pref.jsonl").write_text(pref_lines, encoding="utf-8")
    (out_dir / "training_config.txt").write_text(config_text, encoding="utf-8")

    counts: dict[str, int] = {}
    for record in list(sft_records) + list(pref_pairs):
        counts[record.review_status.value] = counts.get(record.review_status.value, 0) + 1
    snapshot = DatasetSnapshot(
        dataset_id=_sha256_bytes(
            (sft_lines + pref_lines + config_text).encode("utf-8")
        )[:16],
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
        config_digest=_sha256_bytes(
            config_digest_payload(pipeline_config, dict(template_texts)).encode("utf-8")
        ),
        record_counts=counts,
    )
    (out_dir / "snapshot.json").write_text(snapshot.to_json(), encoding="utf-8")
    return snapshot
