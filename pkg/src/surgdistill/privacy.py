"""Single typed boundary for everything that leaves the local system.

Nothing pixel-derived except a MaskSummary can pass: payloads have no field
capable of carrying a raster, field names are whitelisted per purpose, and
runtime heuristics catch smuggled encodings. Every outbound call is audited
to an append-only log before any transmission happens.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from .imaging import MaskSummary


class Purpose(str, Enum):
    SYNTHESIZE = "synthesize"
    JUDGE_PAIR = "judge_pair"
    JUDGE_QUALITY = "judge_quality"
    EMBED = "embed"


_CANDIDATE_FIELD = re.compile(r"^candidate_\d+$")

# Per-purpose whitelist: exact field names plus optional name patterns.
_WHITELIST: dict[Purpose, tuple[frozenset[str], tuple[re.Pattern, ...]]] = {
    Purpose.SYNTHESIZE: (
        frozenset({"anatomy", "phase", "cme_side", "template_id"}),
        (),
    ),
    Purpose.JUDGE_PAIR: (
        frozenset({"anatomy", "phase", "cme_side", "template_id", "prompt", "ground_truth"}),
        (_CANDIDATE_FIELD,),
    ),
    Purpose.JUDGE_QUALITY: (
        frozenset({"anatomy", "phase", "cme_side", "prompt", "candidate", "reference"}),
        (),
    ),
    Purpose.EMBED: (frozenset({"text"}), ()),
}

_DATA_URI = re.compile(r"data:[\w.+-]+/[\w.+-]+;base64,", re.IGNORECASE)


class GateRejection(Exception):
    """Payload refused at the privacy boundary; reason is machine-readable."""

    def __init__(self, reason: str, detail: str):
        super().__init__(f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class GateLimits:
    max_field_chars: int = 4000
    max_payload_bytes: int = 32 * 1024
    base64_run_threshold: int = 512


@dataclass(frozen=True)
class OutboundPayload:
    purpose: Purpose
    text_fields: Mapping[str, str]
    mask_summary: MaskSummary | None = None

    def canonical_bytes(self) -> bytes:
        doc = {
            "purpose": self.purpose.value,
            "text_fields": dict(sorted(self.text_fields.items())),
            "mask_summary": self.mask_summary.to_payload_dict() if self.mask_summary else None,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class SanitizedPayload:
    """Proof-of-sanitization wrapper; the only type outbound clients accept."""

    payload: OutboundPayload
    serialized: bytes
    digest: str

    @property
    def purpose(self) -> Purpose:
        return self.payload.purpose

    @property
    def text_fields(self) -> Mapping[str, str]:
        return self.payload.text_fields

    @property
    def mask_summary(self) -> MaskSummary | None:
        return self.payload.mask_summary


def _base64_run(text: str, threshold: int) -> bool:
    run = 0
    for ch in text:
        if ch.isalnum() or ch in "+/=":
            run += 1
            if run >= threshold:
                return True
        else:
            run = 0
    return False


def sanitize(payload: OutboundPayload, limits: GateLimits = GateLimits()) -> SanitizedPayload:
    """Admit a payload through the boundary or raise GateRejection.

    Accepted payloads are returned byte-for-byte unmodified, wrapped in the
    SanitizedPayload proof type. Pure: no logging, no I/O.
    """
    exact, patterns = _WHITELIST[payload.purpose]
    for name, value in payload.text_fields.items():
        if name not in exact and not any(p.match(name) for p in patterns):
            raise GateRejection("unknown_field", f"field {name!r} not allowed for {payload.purpose.value}")
        if not isinstance(value, str):
            raise GateRejection("unknown_field", f"field {name!r} is not text")
    if payload.mask_summary is not None:
        for row in payload.mask_summary.grid:
            for v in row:
                if v not in (0, 1):
                    raise GateRejection("non_binary_grid", f"grid value {v!r} outside {{0,1}}")
    for name, value in payload.text_fields.items():
        if _DATA_URI.search(value) or _base64_run(value, limits.base64_run_threshold):
            raise GateRejection("encoded_blob_suspected", f"field {name!r} looks like an encoded raster")
    for name, value in payload.text_fields.items():
        if len(value) > limits.max_field_chars:
            raise GateRejection(
                "oversize_field", f"field {name!r} is {len(value)} chars (limit {limits.max_field_chars})"
            )
    serialized = payload.canonical_bytes()
    if len(serialized) > limits.max_payload_bytes:
        raise GateRejection(
            "oversize_field", f"payload is {len(serialized)} bytes (limit {limits.max_payload_bytes})"
        )
    return SanitizedPayload(
        payload=payload,
        serialized=serialized,
        digest=hashlib.sha256(serialized).hexdigest(),
    )


@dataclass(frozen=True)
class AuditRecord:
    timestamp: float
    purpose: str
    destination: str
    digest: str
    payload_bytes: int
    decision: str  # allowed | rejected
    rejection_reason: str | None
    payload_json: str  # stored copy so the digest is recomputable

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "purpose": self.purpose,
                "destination": self.destination,
                "digest": self.digest,
                "payload_bytes": self.payload_bytes,
                "decision": self.decision,
                "rejection_reason": self.rejection_reason,
                "payload_json": self.payload_json,
            },
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )

    @staticmethod
    def from_json(line: str) -> "AuditRecord":
        return AuditRecord(**json.loads(line))


class AuditLog:
    """Append-only line-delimited audit trail with a single serialized writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: AuditRecord) -> None:
        line = record.to_json()
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    def read(self) -> list[AuditRecord]:
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(AuditRecord.from_json(line))
        return records


class PrivacyGate:
    """sanitize + audit in one step; the audit entry lands before any network send."""

    def __init__(self, audit_log: AuditLog, limits: GateLimits = GateLimits(), clock=time.time):
        self.audit_log = audit_log
        self.limits = limits
        self._clock = clock

    def submit(self, payload: OutboundPayload, destination: str) -> SanitizedPayload:
        try:
            sanitized = sanitize(payload, self.limits)
        except GateRejection as rejection:
            serialized = payload.canonical_bytes()
            self.audit_log.append(
                AuditRecord(
                    timestamp=self._clock(),
                    purpose=payload.purpose.value,
                    destination=destination,
                    digest=hashlib.sha256(serialized).hexdigest(),
                    payload_bytes=len(serialized),
                    decision="rejected",
                    rejection_reason=rejection.reason,
                    payload_json=serialized.decode("utf-8"),
                )
            )
            raise
        self.audit_log.append(
            AuditRecord(
                timestamp=self._clock(),
                purpose=payload.purpose.value,
                destination=destination,
                digest=sanitized.digest,
                payload_bytes=len(sanitized.serialized),
                decision="allowed",
                rejection_reason=None,
                payload_json=sanitized.serialized.decode("utf-8"),
            )
        )
        return sanitized
