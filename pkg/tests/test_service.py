import json
import random

import pytest
from fastapi.testclient import TestClient

from surgdistill import builder, service
from surgdistill.config import PipelineConfig
from surgdistill.events import (
    EventLog,
    EventLogCorruptError,
    ExpertEvalSubmission,
    ReviewDecision,
    fold_events,
    replay_log,
)
from surgdistill.privacy import AuditLog, PrivacyGate
from surgdistill.student import MockStudent
from surgdistill.teacher import MockTeacher
from surgdistill.templates import load_sft_templates

MODELS = ("base-vlm", "sft-vlm", "dpo-vlm")


def decision(record_id, action, ts, text=None, reviewer="rev1"):
    return ReviewDecision(record_id, "sft", reviewer, action, text, ts)


def submission(case_id, ts, preferred=(), reviewer="rev1"):
    return ExpertEvalSubmission(
        case_id, reviewer, {m: (3, 4) for m in MODELS}, tuple(preferred), ts
    )


# ---------------------------------------------------------------------------
# Event log


def test_empty_log_empty_state(tmp_path):
    state = replay_log(tmp_path / "events.log")
    assert state.decisions == {} and state.submissions == {}


def test_last_decision_wins(tmp_path):
    log = EventLog(tmp_path / "events.log")
    log.append(decision("r1", "approve", 1.0))
    log.append(decision("r1", "reject", 2.0))
    state = log.replay()
    assert state.decisions["r1"].action == "reject"
    assert [d.action for d in state.decision_history["r1"]] == ["approve", "reject"]


def test_write_then_replay_equals_fold_1000_random_sequences(tmp_path):
    rng = random.Random(31)
    for trial in range(1000):
        events = []
        for i in range(rng.randint(0, 12)):
            if rng.random() < 0.7:
                action = rng.choice(("approve", "edit", "reject"))
                events.append(
                    decision(
                        f"r{rng.randint(0, 4)}",
                        action,
                        float(i),
                        text="edited" if action == "edit" else None,
                        reviewer=f"rev{rng.randint(0, 2)}",
                    )
                )
            else:
                events.append(
                    submission(
                        f"c{rng.randint(0, 3)}",
                        float(i),
                        preferred=rng.sample(MODELS, rng.randint(0, 3)),
                    )
                )
        path = tmp_path / f"log_{trial % 8}.log"
        path.unlink(missing_ok=True)
        log = EventLog(path)
        for event in events:
            log.append(event)
        replayed = log.replay()
        folded = fold_events(events)
        assert replayed.decisions == folded.decisions
        assert replayed.submissions == folded.submissions
        assert replayed.event_count == folded.event_count == len(events)


def test_torn_final_line_tolerated(tmp_path, caplog):
    log = EventLog(tmp_path / "events.log")
    log.append(decision("r1", "approve", 1.0))
    log.append(decision("r2", "approve", 2.0))
    with open(log.path, "a", encoding="utf-8") as fh:
        fh.write('{"kind": "review_decision", "record_id": "r3"')  # torn write
    with caplog.at_level("WARNING"):
        state = log.replay()
    assert set(state.decisions) == {"r1", "r2"}
    assert any("torn" in m for m in caplog.messages)


def test_earlier_malformed_line_hard_error(tmp_path):
    log = EventLog(tmp_path / "events.log")
    log.append(decision("r1", "approve", 1.0))
    original = log.path.read_text()
    log.path.write_text("garbage line\n" + original)
    with pytest.raises(EventLogCorruptError):
        log.replay()


def test_decision_validation():
    with pytest.raises(ValueError):
        ReviewDecision("r", "sft", "rev", "edit", None, 1.0)
    with pytest.raises(ValueError):
        ReviewDecision("r", "sft", "rev", "promote", None, 1.0)
    with pytest.raises(ValueError):
        ExpertEvalSubmission("c", "rev", {"m": (6, 3)}, (), 1.0)


# ---------------------------------------------------------------------------
# HTTP service


@pytest.fixture(scope="module")
def service_dir(tmp_path_factory, mini_manifest):
    data_dir = tmp_path_factory.mktemp("service_data")
    config = PipelineConfig(target_resolution=(160, 90))
    gate = PrivacyGate(AuditLog(data_dir / service.AUDIT_LOG_FILENAME))
    frame_ids = [f.frame_id for f in mini_manifest.frames]
    records = builder.build_sft_dataset(
        mini_manifest, frame_ids, MockTeacher(), gate, load_sft_templates(), config, data_dir
    )
    builder.build_preference_dataset(
        records, MockStudent(), MockTeacher(), gate, config, data_dir, seed=7, include_pending=True
    )
    cases = []
    for i, record in enumerate(records[:4]):
        cases.append(
            {
                "case_id": f"case_{i:02d}",
                "anatomy_class": record.anatomy_class,
                "cme_side": record.cme_side,
                "prompt": record.prompt,
                "reference": record.answer,
                "answers": {m: f"{m} answer about {record.anatomy_class}" for m in MODELS},
                "image_path": record.composite_path,
            }
        )
    (data_dir / service.EVAL_CASES_FILENAME).write_text(
        "".join(json.dumps(c) + "\n" for c in cases), encoding="utf-8"
    )
    return data_dir


@pytest.fixture()
def client(service_dir):
    # Fresh event log per test keeps state isolated.
    (service_dir / service.EVENT_LOG_FILENAME).unlink(missing_ok=True)
    app = service.create_app(service_dir)
    return TestClient(app)


def test_fresh_queue_all_pending_ordered(client):
    body = client.get("/api/review/queue?type=sft").json()
    assert body["count"] == 12
    ids = [r["id"] for r in body["records"]]
    assert ids == sorted(ids)
    assert all(r["status"] == "pending" for r in body["records"])


def test_decision_round_trip(client):
    record_id = client.get("/api/review/queue?type=sft").json()["records"][0]["id"]
    response = client.post(
        f"/api/review/{record_id}/decision",
        json={"action": "approve"},
        headers={"X-Reviewer-Id": "surgeon1"},
    )
    assert response.status_code == 200
    assert response.json()["record"]["status"] == "approved"
    fetched = client.get(f"/api/review/{record_id}").json()
    assert fetched["status"] == "approved"
    assert fetched["history"][0]["reviewer_id"] == "surgeon1"
    pending = client.get("/api/review/queue?type=sft&status=pending").json()
    assert record_id not in [r["id"] for r in pending["records"]]


def test_edit_requires_text(client):
    record_id = client.get("/api/review/queue?type=sft").json()["records"][0]["id"]
    response = client.post(f"/api/review/{record_id}/decision", json={"action": "edit"})
    assert response.status_code == 400


def test_second_decision_reports_history(client):
    record_id = client.get("/api/review/queue?type=sft").json()["records"][0]["id"]
    first = client.post(f"/api/review/{record_id}/decision", json={"action": "approve"})
    assert first.json()["previous_decisions"] == 0
    second = client.post(f"/api/review/{record_id}/decision", json={"action": "reject"})
    assert second.json()["previous_decisions"] == 1
    assert second.json()["record"]["status"] == "rejected"


def test_unknown_record_404(client):
    assert client.post("/api/review/nope/decision", json={"action": "approve"}).status_code == 404


def test_pref_queue_served(client):
    body = client.get("/api/review/queue?type=pref").json()
    assert body["count"] == 12
    first = body["records"][0]
    assert first["accepted"] != first["rejected"]


def test_review_image_served(client):
    record_id = client.get("/api/review/queue?type=sft").json()["records"][0]["id"]
    response = client.get(f"/api/review/{record_id}/image")
    assert response.status_code == 200
    assert response.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_blinded_cases_never_reveal_mapping(client):
    response = client.get("/api/eval/cases")
    assert response.status_code == 200
    text = response.text
    for model in MODELS:
        # Model names may appear inside answer TEXT; the mapping itself must not.
        assert f'"{model}"' not in text.replace(f"{model} answer", "")
    for case in response.json()["cases"]:
        assert set(case) == {"case_id", "prompt", "image_url", "answers", "submitted"}
        assert [a["alias"] for a in case["answers"]] == ["A", "B", "C"]
        assert not case["submitted"]


def test_blinding_is_deterministic_but_case_dependent(service_dir, client):
    cases = client.get("/api/eval/cases").json()["cases"]
    again = client.get("/api/eval/cases").json()["cases"]
    assert cases == again
    orderings = set()
    for case in cases:
        orderings.add(tuple(a["text"].split()[0] for a in case["answers"]))
    assert len(orderings) > 1  # different cases shuffle differently


def test_score_submission_resolves_and_persists(client):
    scores = {alias: {"accuracy": 4, "conciseness": 3} for alias in "ABC"}
    response = client.post(
        "/api/eval/case_00/scores", json={"scores": scores, "preferred": ["A", "B"]}
    )
    assert response.status_code == 200
    mapping = response.json()["resolved"]
    assert set(mapping) == {"A", "B", "C"}
    assert set(mapping.values()) == set(MODELS)
    cases = {c["case_id"]: c for c in client.get("/api/eval/cases").json()["cases"]}
    assert cases["case_00"]["submitted"]
    reveal = client.get("/api/eval/case_00/reveal")
    assert reveal.status_code == 200
    assert reveal.json()["mapping"] == mapping


def test_reveal_blocked_before_submission(client):
    assert client.get("/api/eval/case_01/reveal").status_code == 409


def test_out_of_range_score_rejected_and_not_persisted(client):
    scores = {alias: {"accuracy": 6, "conciseness": 3} for alias in "ABC"}
    response = client.post("/api/eval/case_00/scores", json={"scores": scores})
    assert response.status_code == 422
    assert not client.get("/api/eval/cases").json()["cases"][0]["submitted"]


def test_incomplete_scores_rejected(client):
    response = client.post(
        "/api/eval/case_00/scores",
        json={"scores": {"A": {"accuracy": 4, "conciseness": 3}}},
    )
    assert response.status_code == 400


def test_multi_select_preferences_tallied_in_report(client):
    for case_id in ("case_00", "case_01"):
        scores = {alias: {"accuracy": 4, "conciseness": 4} for alias in "ABC"}
        reveal = client.post(
            f"/api/eval/{case_id}/scores", json={"scores": scores, "preferred": ["A", "B", "C"]}
        )
        assert reveal.status_code == 200
    report = client.get("/api/report").json()
    counts = report["preference_counts"]
    assert all(counts[m] == 2 for m in MODELS)
    assert sum(counts.values()) == 6 > 2  # multi-select exceeds the case count


def test_audit_endpoint_serves_gate_trail(client):
    body = client.get("/api/audit").json()
    assert len(body["records"]) == 24  # 12 synthesize + 12 judge calls
    assert all(r["decision"] == "allowed" for r in body["records"])
    assert all("payload_json" not in r for r in body["records"])


def test_corrupt_event_log_refuses_to_start(service_dir):
    log_path = service_dir / service.EVENT_LOG_FILENAME
    log_path.write_text("not json at all\n" + '{"kind": "x"}\n')
    try:
        with pytest.raises(EventLogCorruptError):
            service.create_app(service_dir)
    finally:
        log_path.unlink()


def test_every_mutation_appends_exactly_one_event(service_dir, client):
    record_id = client.get("/api/review/queue?type=sft").json()["records"][0]["id"]
    log_path = service_dir / service.EVENT_LOG_FILENAME
    client.post(f"/api/review/{record_id}/decision", json={"action": "approve"})
    assert len(log_path.read_text().splitlines()) == 1
    scores = {alias: {"accuracy": 2, "conciseness": 2} for alias in "ABC"}
    client.post("/api/eval/case_02/scores", json={"scores": scores})
    assert len(log_path.read_text().splitlines()) == 2
