"""Append-only event log and its materialized review state.

State is always a pure fold over events, so any crash/restart recovers by
replaying the surviving log prefix. A torn final line (partial write) is
tolerated; corruption anywhere earlier refuses to load.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

VALID_ACTIONS = ("approve", "edit", "reject")


class EventLogCorruptError(RuntimeError):
    """A non-final log line failed to parse."""


@dataclass(frozen=True)
class ReviewDecision:
    record_id: str
    record_type: str  # sft | pref
    reviewer_id: str
    action: str
    edited_text: str | None
    timestamp: float

    def __post_init__(self):
        if self.action not in VALID_ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")
        if self.action == "edit" and not self.edited_text:
            raise ValueError("edit decisions must carry edited text")

    def to_event(self) -> dict:
        return {
            "kind": "review_decision",
            "record_id": self.record_id,
            "record_type": self.record_type,
            "reviewer_id": self.reviewer_id,
            "action": self.action,
            "edited_text": self.edited_text,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class ExpertEvalSubmission:
    case_id: str
    reviewer_id: str
    scores: dict[str, tuple[int, int]]  # model -> (accuracy, conciseness)
    preferred_models: tuple[str, ...]
    timestamp: float

    def __post_init__(self):
        for model, (accuracy, conciseness) in self.scores.items():
            for value in (accuracy, conciseness):
                if not isinstance(value, int) or not 1 <= value <= 5:
                    raise ValueError(f"score out of range for {model}: {value!r}")

    def to_event(self) -> dict:
        return {
            "kind": "expert_submission",
            "case_id": self.case_id,
            "reviewer_id": self.reviewer_id,
            "scores": {m: list(sc) for m, sc in self.scores.items()},
            "preferred_models": list(self.preferred_models),
            "timestamp": self.timestamp,
        }


def event_from_dict(raw: dict):
    kind = raw.get("kind")
    if kind == "review_decision":
        return ReviewDecision(
            record_id=raw["record_id"],
            record_type=raw["record_type"],
            reviewer_id=raw["reviewer_id"],
            action=raw["action"],
            edited_text=raw.get("edited_text"),
            timestamp=raw["timestamp"],
        )
    if kind == "expert_submission":
        return ExpertEvalSubmission(
            case_id=raw["case_id"],
            reviewer_id=raw["reviewer_id"],
            scores={m: (int(a), int(c)) for m, (a, c) in raw["scores"].items()},
            preferred_models=tuple(raw["preferred_models"]),
            timestamp=raw["timestamp"],
        )
    raise ValueError(f"unknown event kind {kind!r}")


@dataclass
class ReviewState:
    """Materialized view: latest decision/submission wins, history retained."""

    decisions: dict[str, ReviewDecision] = field(default_factory=dict)
    decision_history: dict[str, list[ReviewDecision]] = field(default_factory=dict)
    submissions: dict[str, ExpertEvalSubmission] = field(default_factory=dict)
    submission_history: dict[str, list[ExpertEvalSubmission]] = field(default_factory=dict)
    event_count: int = 0

    def apply(self, event) -> None:
        self.event_count += 1
        if isinstance(event, ReviewDecision):
            self.decisions[event.record_id] = event
            self.decision_history.setdefault(event.record_id, []).append(event)
        elif isinstance(event, ExpertEvalSubmission):
            self.submissions[event.case_id] = event
            self.submission_history.setdefault(event.case_id, []).append(event)
        else:
            raise ValueError(f"unknown event type {type(event)!r}")

    def decision_map(self) -> dict[str, tuple[str, str | None]]:
        """record_id -> (action, edited_text), for builder.apply_review_decisions."""
        return {rid: (d.action, d.edited_text) for rid, d in self.decisions.items()}


def fold_events(events) -> ReviewState:
    state = ReviewState()
    for event in events:
        state.apply(event)
    return state


class EventLog:
    """Line-delimited JSON, single serialized writer, append-only."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, event) -> None:
        line = json.dumps(event.to_event(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    def read_events(self) -> list:
        if not self.path.exists():
            return []
        lines = self.path.read_text(encoding="utf-8").splitlines()
        events = []
        for index, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                events.append(event_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                if index == len(lines) - 1:
                    logger.warning("ignoring torn final log line: %s", exc)
                    break
                raise EventLogCorruptError(f"corrupt event log at line {index + 1}: {exc}") from exc
        return events

    def replay(self) -> ReviewState:
        return fold_events(self.read_events())


def replay_log(path: str | Path) -> ReviewState:
    """Rebuild the materialized state from a log file on disk."""
    return EventLog(path).replay()
