"""Client abstraction over the external teacher model.

Two backends share one surface: a real HTTP backend with bounded parallelism
and exponential-backoff retries, and a fully deterministic mock used by tests
and desk-scale runs. Both accept only SanitizedPayload, so no raster can reach
this module by construction.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from .privacy import OutboundPayload, Purpose, SanitizedPayload
from .imaging import MaskSummary
from .templates import load_teacher_template
from .text import token_f1, tokenize, round_half_away


class TeacherRequestError(RuntimeError):
    """HTTP backend failed after exhausting retries."""


class EmptyCompletionError(RuntimeError):
    """Backend returned an empty completion body."""


class VerdictParseError(ValueError):
    """Backend emitted an unusable accepted/rejected verdict."""


class ScoreParseError(ValueError):
    """Backend emitted a non-integer or out-of-range judge score."""


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5  # seconds; doubles per attempt

    def delay(self, attempt: int) -> float:
        return self.backoff_base * (2 ** (attempt - 1))


@dataclass(frozen=True)
class TeacherConfig:
    backend: str = "mock"  # mock | http
    base_url: str = ""
    model: str = "general-purpose-teacher"
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 30.0

    def __post_init__(self):
        if self.backend not in ("mock", "http"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class JudgeVerdict:
    accepted_index: int
    rejected_index: int
    rationale: str

    def __post_init__(self):
        if self.accepted_index == self.rejected_index:
            raise VerdictParseError("accepted and rejected indices must differ")


@dataclass(frozen=True)
class JudgeScore:
    accuracy: int
    conciseness: int
    composite: float
    rationale: str

    def __post_init__(self):
        for name, value in (("accuracy", self.accuracy), ("conciseness", self.conciseness)):
            if not isinstance(value, int) or not 1 <= value <= 5:
                raise ScoreParseError(f"{name} must be an integer in [1,5], got {value!r}")


def make_judge_score(accuracy: int, conciseness: int, rationale: str) -> JudgeScore:
    return JudgeScore(
        accuracy=accuracy,
        conciseness=conciseness,
        composite=0.75 * accuracy + 0.25 * conciseness,
        rationale=rationale,
    )


# ---------------------------------------------------------------------------
# Payload builders: the only places the pipeline assembles outbound content.

def build_synthesize_payload(
    anatomy: str, phase: str, cme_side: str, template_id: str, mask_summary: MaskSummary
) -> OutboundPayload:
    return OutboundPayload(
        purpose=Purpose.SYNTHESIZE,
        text_fields={
            "anatomy": anatomy,
            "phase": phase,
            "cme_side": cme_side,
            "template_id": template_id,
        },
        mask_summary=mask_summary,
    )


def build_judge_pair_payload(
    student_answers: Sequence[str],
    ground_truth: str,
    prompt: str,
    anatomy: str,
    phase: str,
    cme_side: str,
    mask_summary: MaskSummary | None = None,
) -> OutboundPayload:
    if len(student_answers) < 2:
        raise ValueError("need at least 2 student answers to judge a pair")
    fields = {f"candidate_{i}": text for i, text in enumerate(student_answers)}
    fields.update(
        {
            "ground_truth": ground_truth,
            "prompt": prompt,
            "anatomy": anatomy,
            "phase": phase,
            "cme_side": cme_side,
        }
    )
    return OutboundPayload(purpose=Purpose.JUDGE_PAIR, text_fields=fields, mask_summary=mask_summary)


def build_judge_quality_payload(
    candidate: str,
    reference: str,
    prompt: str,
    anatomy: str = "",
    phase: str = "",
    cme_side: str = "",
    mask_summary: MaskSummary | None = None,
) -> OutboundPayload:
    if not candidate or not reference:
        raise ValueError("candidate and reference must be non-empty")
    return OutboundPayload(
        purpose=Purpose.JUDGE_QUALITY,
        text_fields={
            "candidate": candidate,
            "reference": reference,
            "prompt": prompt,
            "anatomy": anatomy,
            "phase": phase,
            "cme_side": cme_side,
        },
        mask_summary=mask_summary,
    )


def extract_pair_candidates(payload: SanitizedPayload) -> tuple[list[str], str]:
    """Student answers in index order plus the ground truth, from a judge_pair payload."""
    fields = payload.text_fields
    students = []
    for i in range(len(fields)):
        key = f"candidate_{i}"
        if key not in fields:
            break
        students.append(fields[key])
    if len(students) < 2 or "ground_truth" not in fields:
        raise VerdictParseError("judge_pair payload lacks candidates or ground truth")
    return students, fields["ground_truth"]


# ---------------------------------------------------------------------------
# Mock backend: deterministic, pure, used for tests and desk-scale runs.

SIGNIFICANCE = {
    "preparation plane": (
        "Staying in this embryological plane keeps the mesocolic fascia intact, "
        "which is the core quality requirement of the excision."
    ),
    "angel's hair": (
        "These fine avascular fibres mark the correct loose areolar layer between "
        "the mesocolic and retroperitoneal fascia, confirming the dissection is on plane."
    ),
    "vena mesenterica inferior": (
        "The inferior mesenteric vein is a key vascular landmark guiding the "
        "medial-to-lateral dissection and must be ligated deliberately, never torn."
    ),
    "duodenum": (
        "The duodenum must be identified early and shielded from thermal or "
        "traction injury while the mesocolon is mobilised off it."
    ),
    "pancreas": (
        "The pancreas marks the superior border of the dissection; staying "
        "superficial to it avoids parenchymal injury and postoperative fistula."
    ),
}

_GENERIC_SIGNIFICANCE = "Correctly identifying it keeps the dissection in the proper plane."


class MockTeacher:
    """Deterministic stand-in for the hosted model; pure function of its inputs."""

    def __init__(self, config: TeacherConfig | None = None):
        self.config = config or TeacherConfig(backend="mock")
        self.model = self.config.model

    def synthesize_answer(self, payload: SanitizedPayload) -> str:
        if payload.purpose is not Purpose.SYNTHESIZE:
            raise ValueError(f"expected a synthesize payload, got {payload.purpose}")
        anatomy = payload.text_fields.get("anatomy", "the structure")
        region = payload.mask_summary.region_label if payload.mask_summary else "center"
        significance = SIGNIFICANCE.get(anatomy, _GENERIC_SIGNIFICANCE)
        return (
            f"The highlighted structure is {anatomy}, located in the {region} "
            f"of the image. {significance}"
        )

    def judge_pair(self, payload: SanitizedPayload) -> JudgeVerdict:
        if payload.purpose is not Purpose.JUDGE_PAIR:
            raise ValueError(f"expected a judge_pair payload, got {payload.purpose}")
        students, ground_truth = extract_pair_candidates(payload)
        everyone = students + [ground_truth]
        f1s = [token_f1(text, ground_truth) for text in everyone]
        accepted = f1s.index(max(f1s))  # ties resolve to the lowest index
        # Rejected comes from the student candidates only; skip the accepted
        # index so the accepted != rejected invariant holds even on F1 ties.
        student_indices = [i for i in range(len(students)) if i != accepted]
        rejected = min(student_indices, key=lambda i: (f1s[i], i))
        return JudgeVerdict(
            accepted_index=accepted,
            rejected_index=rejected,
            rationale=(
                f"token-F1 vs ground truth: accepted {f1s[accepted]:.3f}, "
                f"rejected {f1s[rejected]:.3f}"
            ),
        )

    def judge_quality(self, payload: SanitizedPayload) -> JudgeScore:
        if payload.purpose is not Purpose.JUDGE_QUALITY:
            raise ValueError(f"expected a judge_quality payload, got {payload.purpose}")
        candidate = payload.text_fields["candidate"]
        reference = payload.text_fields["reference"]
        f1 = token_f1(candidate, reference)
        accuracy = int(min(5, max(1, round_half_away(1 + 4 * f1))))
        ratio = len(tokenize(candidate)) / max(1, len(tokenize(reference)))
        conciseness = int(min(5, max(1, round_half_away(5 - 4 * max(0.0, ratio - 1.0)))))
        return make_judge_score(
            accuracy,
            conciseness,
            rationale=f"token-F1 {f1:.3f}, length ratio {ratio:.2f}",
        )


# ---------------------------------------------------------------------------
# HTTP backend.

def _render_mask_block(summary: MaskSummary | None) -> dict[str, str]:
    if summary is None:
        return {
            "region_label": "unknown",
            "centroid": "n/a",
            "bbox": "n/a",
            "area_pct": "n/a",
            "grid": "(none)",
        }
    grid = "\n".join("".join(str(v) for v in row) for row in summary.grid)
    return {
        "region_label": summary.region_label,
        "centroid": f"({summary.centroid[0]:.3f}, {summary.centroid[1]:.3f})",
        "bbox": "(" + ", ".join(f"{v:.3f}" for v in summary.bbox) + ")",
        "area_pct": f"{summary.area_fraction * 100:.1f}%",
        "grid": grid,
    }


_VERDICT_RE = re.compile(
    r"ACCEPTED:\s*(\d+).*?REJECTED:\s*(\d+).*?RATIONALE:\s*(.*)", re.DOTALL
)
_SCORE_RE = re.compile(
    r"ACCURACY:\s*(\d+).*?CONCISENESS:\s*(\d+).*?RATIONALE:\s*(.*)", re.DOTALL
)


class HttpTeacher:
    """POSTs to a single completion endpoint with retries and bounded parallelism.

    Base URL and API key come from config / TEACHER_BASE_URL / TEACHER_API_KEY.
    """

    def __init__(
        self,
        config: TeacherConfig,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        template_dir=None,
    ):
        base_url = config.base_url or os.environ.get("TEACHER_BASE_URL", "")
        if not base_url:
            raise ValueError("http backend needs a base_url (or TEACHER_BASE_URL)")
        self.config = config
        self.model = config.model
        self.base_url = base_url
        self._client = httpx.Client(transport=transport, timeout=config.timeout)
        self._slots = threading.Semaphore(config.max_in_flight)
        self._sleep = sleeper
        self._template_dir = template_dir
        self.last_attempt_count = 0

    def close(self) -> None:
        self._client.close()

    def _complete(self, prompt: str, temperature: float = 0.2) -> str:
        headers = {}
        api_key = os.environ.get("TEACHER_API_KEY")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.config.model,
            "prompt": prompt,
            "params": {"temperature": temperature},
        }
        attempts = 0
        last_error: Exception | None = None
        while attempts < self.config.retry.max_attempts:
            attempts += 1
            self.last_attempt_count = attempts
            try:
                with self._slots:
                    response = self._client.post(self.base_url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
            else:
                if response.status_code == 200:
                    completion = response.json().get("completion", "")
                    if not completion:
                        raise EmptyCompletionError("backend returned an empty completion")
                    return completion
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = TeacherRequestError(f"status {response.status_code}")
                else:
                    raise TeacherRequestError(
                        f"status {response.status_code}: {response.text[:200]}"
                    )
            if attempts < self.config.retry.max_attempts:
                self._sleep(self.config.retry.delay(attempts))
        raise TeacherRequestError(
            f"failed after {attempts} attempts: {last_error}"
        ) from last_error

    def synthesize_answer(self, payload: SanitizedPayload) -> str:
        template = load_teacher_template("synthesize", self._template_dir)
        prompt = template.format(
            anatomy=payload.text_fields.get("anatomy", ""),
            phase=payload.text_fields.get("phase", ""),
            cme_side=payload.text_fields.get("cme_side", ""),
            template_id=payload.text_fields.get("template_id", ""),
            **_render_mask_block(payload.mask_summary),
        )
        return self._complete(prompt)

    def judge_pair(self, payload: SanitizedPayload) -> JudgeVerdict:
        students, ground_truth = extract_pair_candidates(payload)
        listing = "\n".join(f"[{i}] {text}" for i, text in enumerate(students))
        listing += f"\n[{len(students)}] GROUND_TRUTH: {ground_truth}"
        template = load_teacher_template("judge_pair", self._template_dir)
        prompt = template.format(
            anatomy=payload.text_fields.get("anatomy", ""),
            phase=payload.text_fields.get("phase", ""),
            cme_side=payload.text_fields.get("cme_side", ""),
            prompt=payload.text_fields.get("prompt", ""),
            candidates=listing,
        )
        completion = self._complete(prompt)
        match = _VERDICT_RE.search(completion)
        if not match:
            raise VerdictParseError(f"no verdict block in completion: {completion[:200]!r}")
        accepted, rejected = int(match.group(1)), int(match.group(2))
        if not 0 <= accepted <= len(students) or not 0 <= rejected < len(students):
            raise VerdictParseError(f"verdict indices out of range: {accepted}, {rejected}")
        return JudgeVerdict(accepted, rejected, match.group(3).strip())

    def judge_quality(self, payload: SanitizedPayload) -> JudgeScore:
        template = load_teacher_template("judge_quality", self._template_dir)
        prompt = template.format(
            anatomy=payload.text_fields.get("anatomy", ""),
            phase=payload.text_fields.get("phase", ""),
            cme_side=payload.text_fields.get("cme_side", ""),
            prompt=payload.text_fields.get("prompt", ""),
            candidate=payload.text_fields["candidate"],
            reference=payload.text_fields["reference"],
        )
        completion = self._complete(prompt)
        match = _SCORE_RE.search(completion)
        if not match:
            raise ScoreParseError(f"no score block in completion: {completion[:200]!r}")
        accuracy, conciseness = int(match.group(1)), int(match.group(2))
        return make_judge_score(accuracy, conciseness, match.group(3).strip())


def make_teacher(config: TeacherConfig, **http_kwargs):
    if config.backend == "mock":
        return MockTeacher(config)
    return HttpTeacher(config, **http_kwargs)
