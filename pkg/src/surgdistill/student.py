"""Local model being distilled: controlled sampling over composite images.

The student sits inside the privacy boundary, so its HTTP variant may receive
image paths or inline rasters. The mock student is a pure function of
(frame_id, class, seed) so pipeline runs are replayable byte for byte.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import httpx

from .corpus import AnatomyClass
from .teacher import SIGNIFICANCE
from .text import normalize_answer, stable_hash64


class DegenerateSamplingError(RuntimeError):
    """Fewer than 2 distinct answers even after seed-jitter retries."""


class StudentRequestError(RuntimeError):
    """Local inference endpoint unreachable or returned an error."""


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 1.0
    top_p: float = 0.9
    seed: int = 0
    max_tokens: int = 128

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0,1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class CandidateAnswer:
    text: str
    sampling: SamplingConfig | None
    source: str  # student | ground_truth

    def __post_init__(self):
        if not self.text:
            raise ValueError("candidate text must be non-empty")
        if self.source not in ("student", "ground_truth"):
            raise ValueError(f"unknown candidate source {self.source!r}")
        if self.source == "ground_truth" and self.sampling is not None:
            raise ValueError("ground-truth candidates carry no sampling config")


_COMPOSITE_NAME = re.compile(r"^(?P<frame>.+?)__(?P<cls>.+?)__composite$")


def parse_composite_ref(composite_ref: str | Path) -> tuple[str, str]:
    """Recover (frame_id, anatomy class value) from a composite file reference."""
    stem = Path(composite_ref).stem
    match = _COMPOSITE_NAME.match(stem)
    if not match:
        raise ValueError(f"not a composite reference: {composite_ref}")
    return match.group("frame"), match.group("cls")


# Paraphrase table: 8 pairwise-distinct framings of the canonical answer. The
# last one is deliberately repetitive so judge scores spread realistically.
_VARIANTS = (
    "The highlighted structure is the {name}. {sig}",
    "This appears to be the {name}. {sig}",
    "The green overlay marks the {name}. {sig}",
    "Highlighted here is the {name}, a key landmark to keep oriented during this dissection.",
    "The structure shown is the {name}. It should be identified early so the dissection stays safe.",
    "I can see the {name} highlighted in this frame. {sig}",
    "The mask points to the {name}. Handling it correctly supports an intact specimen.",
    "This region is the {name}. {sig} To repeat, the highlighted region is the {name}.",
)


class MockStudent:
    """Deterministic paraphrase generator; variant choice is a pure function of inputs."""

    def generate(self, composite_ref: str | Path, prompt: str, sampling: SamplingConfig) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        frame_id, cls_value = parse_composite_ref(composite_ref)
        try:
            display = AnatomyClass(cls_value).display_name
        except ValueError:
            display = cls_value.replace("_", " ")
        base = stable_hash64(f"{frame_id}|{cls_value}")
        if sampling.temperature == 0:  # greedy: seed-independent
            idx = base % len(_VARIANTS)
        else:
            idx = (base + sampling.seed) % len(_VARIANTS)
        text = _VARIANTS[idx].format(name=display, sig=SIGNIFICANCE.get(display, ""))
        text = " ".join(text.split())
        tokens = text.split()
        if len(tokens) > sampling.max_tokens:
            text = " ".join(tokens[: sampling.max_tokens])
        return text


class HttpStudent:
    """Client for a local inference endpoint: POST {image ref, prompt, sampling} -> {text}."""

    def __init__(self, base_url: str = "", transport: httpx.BaseTransport | None = None, timeout: float = 60.0):
        self.base_url = base_url or os.environ.get("STUDENT_BASE_URL", "")
        if not self.base_url:
            raise ValueError("http student needs a base_url (or STUDENT_BASE_URL)")
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def generate(self, composite_ref: str | Path, prompt: str, sampling: SamplingConfig) -> str:
        body = {
            "image_path": str(composite_ref),
            "prompt": prompt,
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
            "seed": sampling.seed,
            "max_tokens": sampling.max_tokens,
        }
        try:
            response = self._client.post(self.base_url, json=body)
        except httpx.TransportError as exc:
            raise StudentRequestError(f"inference endpoint unreachable: {exc}") from exc
        if response.status_code != 200:
            raise StudentRequestError(f"status {response.status_code}: {response.text[:200]}")
        text = response.json().get("text", "")
        if not text:
            raise StudentRequestError("inference endpoint returned empty text")
        return text


TEMPERATURE_LADDER = (0.2, 0.5, 0.8, 1.0, 1.2)
_RETRY_ROUNDS = 3


def sample_distinct(
    student,
    composite_ref: str | Path,
    prompt: str,
    n: int,
    base: SamplingConfig,
) -> tuple[list[CandidateAnswer], bool]:
    """Generate n pairwise-distinct candidates over the temperature ladder.

    Distinctness is judged on whitespace/case-normalized text. Duplicate
    rounds retry with jittered seeds up to 3 extra times; if fewer than n but
    at least 2 distinct answers remain, the partial set is returned with
    degraded=True. Fewer than 2 raises DegenerateSamplingError.
    Result order follows ladder index, so assembly is deterministic.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    distinct: dict[str, CandidateAnswer] = {}
    for round_idx in range(1 + _RETRY_ROUNDS):
        for i in range(n):
            config = SamplingConfig(
                temperature=TEMPERATURE_LADDER[i % len(TEMPERATURE_LADDER)],
                top_p=base.top_p,
                seed=base.seed + round_idx * n + i,
                max_tokens=base.max_tokens,
            )
            text = student.generate(composite_ref, prompt, config)
            key = normalize_answer(text)
            if key not in distinct:
                distinct[key] = CandidateAnswer(text=text, sampling=config, source="student")
            if len(distinct) == n:
                return list(distinct.values()), False
        if len(distinct) == n:
            break
    if len(distinct) < 2:
        raise DegenerateSamplingError(
            f"only {len(distinct)} distinct answer(s) after {1 + _RETRY_ROUNDS} rounds"
        )
    return list(distinct.values())[:n], len(distinct) < n
