"""Shared text utilities: tokenization, token-level F1, fixed rounding rules.

Every text metric in the pipeline uses the same tokenizer so that scores are
comparable across the judge mock, BLEU, and the embedding metric.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from decimal import ROUND_HALF_UP, Decimal

_PUNCT_RE = re.compile(r"([^\w\s])")


def tokenize(text: str) -> list[str]:
    """Lowercase, detach punctuation into standalone tokens, split on whitespace."""
    return _PUNCT_RE.sub(r" \1 ", text.lower()).split()


def normalize_answer(text: str) -> str:
    """Case- and whitespace-insensitive canonical form, used for distinctness checks."""
    return " ".join(text.lower().split())


def token_f1(candidate: str, reference: str) -> float:
    """Multiset token-overlap F1 between two texts (order-insensitive)."""
    cand = Counter(tokenize(candidate))
    ref = Counter(tokenize(reference))
    overlap = sum((cand & ref).values())
    total = sum(cand.values()) + sum(ref.values())
    if total == 0:
        return 0.0
    return 2.0 * overlap / total


def round_half_away(value: float, ndigits: int = 0) -> float:
    """Round with ties going away from zero (Python's round() uses banker's rounding)."""
    quant = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(value)).quantize(quant, rounding=ROUND_HALF_UP))


def format_two_decimals(value: float) -> str:
    """Two-decimal string with half-away-from-zero ties, e.g. 0.285 -> '0.29'."""
    return f"{round_half_away(value, 2):.2f}"


def format_mean_std(mean: float, std: float) -> str:
    return f"{format_two_decimals(mean)} ± {format_two_decimals(std)}"


def stable_hash64(text: str) -> int:
    """Platform- and process-stable 64-bit hash (builtin hash() is randomized)."""
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
