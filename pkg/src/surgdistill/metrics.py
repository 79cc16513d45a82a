"""Evaluation harness: BLEU-4, embedding-similarity F1, judge composites,
laterality lint, expert-subset selection, and report aggregation."""

from __future__ import annotations

import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .teacher import JudgeScore
from .text import format_mean_std, format_two_decimals, stable_hash64, tokenize


class SelectionError(ValueError):
    """Requested subset larger than the population."""


class AggregationError(ValueError):
    """Nothing to aggregate."""


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    anatomy_class: str
    cme_side: str
    prompt: str
    reference: str
    model_answers: dict[str, str]
    image_path: str = ""

    def __post_init__(self):
        if not self.reference:
            raise ValueError("reference answer must be non-empty")
        if not self.model_answers:
            raise ValueError("at least one model answer is required")


@dataclass(frozen=True)
class MetricResult:
    case_id: str
    model: str
    anatomy_class: str
    bleu4: float
    embed_f1: float
    judge: JudgeScore
    laterality_flag: bool

    def __post_init__(self):
        if not 0.0 <= self.bleu4 <= 1.0:
            raise ValueError(f"bleu4 out of range: {self.bleu4}")
        if not 0.0 <= self.embed_f1 <= 1.0:
            raise ValueError(f"embed_f1 out of range: {self.embed_f1}")


def bleu4(hypothesis: str, reference: str) -> float:
    """Sentence-level BLEU with n=1..4 modified precisions and brevity penalty.

    Smoothing adds one to numerator and denominator for n >= 2 only; a zero
    unigram precision short-circuits to 0.0. Empty hypothesis scores 0.0.
    """
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise ValueError("reference must contain at least one token")
    hyp_tokens = tokenize(hypothesis)
    if not hyp_tokens:
        return 0.0
    log_precision_sum = 0.0
    for n in range(1, 5):
        hyp_ngrams = Counter(tuple(hyp_tokens[i : i + n]) for i in range(len(hyp_tokens) - n + 1))
        ref_ngrams = Counter(tuple(ref_tokens[i : i + n]) for i in range(len(ref_tokens) - n + 1))
        matched = sum(min(count, ref_ngrams[gram]) for gram, count in hyp_ngrams.items())
        total = max(len(hyp_tokens) - n + 1, 0)
        if n == 1:
            if matched == 0:
                return 0.0
            precision = matched / total
        else:
            precision = (matched + 1) / (total + 1)
        log_precision_sum += 0.25 * math.log(precision)
    c, r = len(hyp_tokens), len(ref_tokens)
    brevity = math.exp(1 - r / c) if c < r else 1.0
    return brevity * math.exp(log_precision_sum)


class HashEmbedder:
    """Deterministic mock embedder: token -> reproducible pseudo-random unit vector."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, tokens: list[str]) -> np.ndarray:
        rows = []
        for token in tokens:
            vec = self._cache.get(token)
            if vec is None:
                rng = np.random.default_rng(stable_hash64(token))
                vec = rng.normal(size=self.dim)
                vec /= np.linalg.norm(vec)
                self._cache[token] = vec
            rows.append(vec)
        return np.stack(rows)


def embed_precision_recall(hypothesis: str, reference: str, embedder) -> tuple[float, float]:
    """Greedy-matching components: precision is the mean over hypothesis tokens
    of the best cosine against any reference token, recall symmetric. Negative
    means floor at 0 so downstream scores stay in [0,1]."""
    hyp_tokens = tokenize(hypothesis)
    ref_tokens = tokenize(reference)
    if not hyp_tokens or not ref_tokens:
        return 0.0, 0.0
    sims = embedder.embed(hyp_tokens) @ embedder.embed(ref_tokens).T
    precision = max(0.0, float(sims.max(axis=1).mean()))
    recall = max(0.0, float(sims.max(axis=0).mean()))
    return precision, recall


def embed_f1(hypothesis: str, reference: str, embedder) -> float:
    """Harmonic mean of the greedy-matching precision/recall; empty side -> 0.0."""
    precision, recall = embed_precision_recall(hypothesis, reference, embedder)
    if precision + recall == 0.0:
        return 0.0
    return min(1.0, 2 * precision * recall / (precision + recall))


def composite_score(
    accuracy: float, conciseness: float, weights: tuple[float, float] = (0.75, 0.25)
) -> float:
    for name, value in (("accuracy", accuracy), ("conciseness", conciseness)):
        if not 1 <= value <= 5:
            raise ValueError(f"{name} must be in [1,5], got {value}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {weights}")
    return weights[0] * accuracy + weights[1] * conciseness


_LATERALITY_PATTERNS = {
    "left": re.compile(r"left[-\s]sided|left\s+cme", re.IGNORECASE),
    "right": re.compile(r"right[-\s]sided|right\s+cme", re.IGNORECASE),
}


@dataclass(frozen=True)
class LateralityFlag:
    flagged: bool
    matched_phrase: str | None = None


def laterality_check(answer: str, side: str) -> LateralityFlag:
    """Flag answers whose sidedness phrasing contradicts the procedure metadata.

    Diagnostic only; reported separately and never folded into scores.
    Unspecified side never flags.
    """
    if side not in ("left", "right"):
        return LateralityFlag(False)
    opposite = "right" if side == "left" else "left"
    match = _LATERALITY_PATTERNS[opposite].search(answer)
    if match:
        return LateralityFlag(True, match.group(0))
    return LateralityFlag(False)


def select_expert_subset(cases: list, n: int, seed: int) -> list:
    """Sample n cases without replacement, deterministic per seed."""
    if n > len(cases):
        raise SelectionError(f"cannot select {n} from {len(cases)} cases")
    return random.Random(seed).sample(list(cases), n)


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float  # sample convention (n-1); 0.0 for a single observation

    @property
    def formatted(self) -> str:
        return format_mean_std(self.mean, self.std)


@dataclass
class ExpertDecision:
    """One reviewer submission: per-model 1-5 scores plus multi-select preference."""

    case_id: str
    scores: dict[str, tuple[int, int]]  # model -> (accuracy, conciseness)
    preferred_models: tuple[str, ...] = ()


@dataclass
class EvalReport:
    case_counts: dict[str, int]
    metrics: dict[str, dict[str, MeanStd]]  # model -> metric name -> stats
    per_class_judge: dict[str, dict[str, float]]  # model -> class -> mean composite
    preference_counts: dict[str, int]
    laterality_counts: dict[str, int]
    expert_case_count: int = 0

    def to_dict(self) -> dict:
        return {
            "case_counts": self.case_counts,
            "metrics": {
                model: {
                    name: {"mean": ms.mean, "std": ms.std, "formatted": ms.formatted}
                    for name, ms in stats.items()
                }
                for model, stats in self.metrics.items()
            },
            "per_class_judge": self.per_class_judge,
            "preference_counts": self.preference_counts,
            "laterality_counts": self.laterality_counts,
            "expert_case_count": self.expert_case_count,
        }


def _mean_std(values: list[float]) -> MeanStd:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return MeanStd(mean=float(arr.mean()), std=std)


def aggregate(
    results: list[MetricResult], expert_decisions: list[ExpertDecision] | None = None
) -> EvalReport:
    """Fold per-case results into the report shape: mean +- sample std per
    metric per model, per-class judge means, and multi-select preference
    counts (a case may count toward several models). Input order never
    affects any reported number.
    """
    if not results:
        raise AggregationError("no metric results to aggregate")
    # Total ordering: the fold must not depend on input order even for ties.
    ordered = sorted(
        results,
        key=lambda r: (r.case_id, r.model, r.anatomy_class, r.bleu4, r.embed_f1, r.judge.composite),
    )
    per_model: dict[str, list[MetricResult]] = {}
    for result in ordered:
        per_model.setdefault(result.model, []).append(result)

    metrics, per_class, laterality, case_counts = {}, {}, {}, {}
    for model, rows in sorted(per_model.items()):
        case_counts[model] = len(rows)
        metrics[model] = {
            "bleu4": _mean_std([r.bleu4 for r in rows]),
            "embed_f1": _mean_std([r.embed_f1 for r in rows]),
            "judge": _mean_std([r.judge.composite for r in rows]),
        }
        by_class: dict[str, list[float]] = {}
        for r in rows:
            by_class.setdefault(r.anatomy_class, []).append(r.judge.composite)
        per_class[model] = {cls: _mean_std(vals).mean for cls, vals in sorted(by_class.items())}
        laterality[model] = sum(1 for r in rows if r.laterality_flag)

    preference_counts = {model: 0 for model in per_model}
    expert_scores: dict[str, list[float]] = {model: [] for model in per_model}
    decisions = expert_decisions or []
    for decision in sorted(decisions, key=lambda d: d.case_id):
        for model in set(decision.preferred_models):
            if model in preference_counts:
                preference_counts[model] += 1
        for model, (acc, conc) in sorted(decision.scores.items()):
            if model in expert_scores:
                expert_scores[model].append(composite_score(acc, conc))
    for model, values in expert_scores.items():
        if values:
            metrics[model]["expert"] = _mean_std(values)

    return EvalReport(
        case_counts=case_counts,
        metrics=metrics,
        per_class_judge=per_class,
        preference_counts=preference_counts,
        laterality_counts=laterality,
        expert_case_count=len(decisions),
    )


def metric_result_to_dict(result: MetricResult) -> dict:
    return {
        "case_id": result.case_id,
        "model": result.model,
        "anatomy_class": result.anatomy_class,
        "bleu4": result.bleu4,
        "embed_f1": result.embed_f1,
        "judge": {
            "accuracy": result.judge.accuracy,
            "conciseness": result.judge.conciseness,
            "composite": result.judge.composite,
            "rationale": result.judge.rationale,
        },
        "laterality_flag": result.laterality_flag,
    }


def metric_result_from_dict(raw: dict) -> MetricResult:
    judge = raw["judge"]
    return MetricResult(
        case_id=raw["case_id"],
        model=raw["model"],
        anatomy_class=raw["anatomy_class"],
        bleu4=raw["bleu4"],
        embed_f1=raw["embed_f1"],
        judge=JudgeScore(
            accuracy=judge["accuracy"],
            conciseness=judge["conciseness"],
            composite=judge["composite"],
            rationale=judge["rationale"],
        ),
        laterality_flag=raw["laterality_flag"],
    )


def render_report_text(report: EvalReport) -> str:
    """Human-readable table: metric rows by model columns, then per-class judge means."""
    models = sorted(report.case_counts)
    width = max([12] + [len(m) for m in models]) + 3
    lines = []
    header = f"{'Metric':<28}" + "".join(f"{m:>{width}}" for m in models)
    lines.append(header)
    lines.append("-" * len(header))
    rows = [
        ("bleu4 (0-1)", "bleu4"),
        ("embed F1 (0-1)", "embed_f1"),
        ("judge composite (1-5)", "judge"),
        ("expert composite (1-5)", "expert"),
    ]
    for label, key in rows:
        if not any(key in report.metrics[m] for m in models):
            continue
        cells = [
            report.metrics[m][key].formatted if key in report.metrics[m] else "-" for m in models
        ]
        lines.append(f"{label:<28}" + "".join(f"{c:>{width}}" for c in cells))
    lines.append(
        f"{'preferred (count)':<28}"
        + "".join(f"{report.preference_counts.get(m, 0):>{width}}" for m in models)
    )
    lines.append(
        f"{'laterality flags':<28}"
        + "".join(f"{report.laterality_counts.get(m, 0):>{width}}" for m in models)
    )
    lines.append("")
    lines.append("Judge composite by anatomy class:")
    classes = sorted({cls for per in report.per_class_judge.values() for cls in per})
    for cls in classes:
        cells = []
        for m in models:
            value = report.per_class_judge.get(m, {}).get(cls)
            cells.append(format_two_decimals(value) if value is not None else "-")
        lines.append(f"  {cls:<26}" + "".join(f"{c:>{width}}" for c in cells))
    lines.append("")
    lines.append(f"cases: {report.case_counts}  expert cases: {report.expert_case_count}")
    return "\n".join(lines) + "\n"
