import httpx
import pytest

from surgdistill.student import (
    CandidateAnswer,
    DegenerateSamplingError,
    HttpStudent,
    MockStudent,
    SamplingConfig,
    StudentRequestError,
    parse_composite_ref,
    sample_distinct,
)
from surgdistill.text import normalize_answer

COMPOSITE = "composites/proc_a_f00__duodenum__composite.png"
PROMPT = "Identify the highlighted anatomical structure."


class CountingStudent:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def generate(self, composite_ref, prompt, sampling):
        self.calls += 1
        return self.inner.generate(composite_ref, prompt, sampling)


class ConstantStudent:
    def generate(self, composite_ref, prompt, sampling):
        return "always the same answer"


def test_parse_composite_ref():
    assert parse_composite_ref(COMPOSITE) == ("proc_a_f00", "duodenum")
    with pytest.raises(ValueError):
        parse_composite_ref("not_a_composite.png")


def test_mock_same_seed_same_text():
    student = MockStudent()
    config = SamplingConfig(temperature=0.8, seed=1)
    assert student.generate(COMPOSITE, PROMPT, config) == student.generate(COMPOSITE, PROMPT, config)


def test_mock_different_seed_different_text():
    student = MockStudent()
    first = student.generate(COMPOSITE, PROMPT, SamplingConfig(temperature=0.8, seed=1))
    second = student.generate(COMPOSITE, PROMPT, SamplingConfig(temperature=0.8, seed=2))
    assert first != second


def test_temperature_zero_is_greedy_and_seed_independent():
    student = MockStudent()
    greedy_a = student.generate(COMPOSITE, PROMPT, SamplingConfig(temperature=0.0, seed=1))
    greedy_b = student.generate(COMPOSITE, PROMPT, SamplingConfig(temperature=0.0, seed=99))
    assert greedy_a == greedy_b


def test_sampling_config_validation():
    with pytest.raises(ValueError):
        SamplingConfig(temperature=-0.1)
    with pytest.raises(ValueError):
        SamplingConfig(top_p=0.0)
    with pytest.raises(ValueError):
        SamplingConfig(max_tokens=0)


def test_candidate_answer_invariants():
    with pytest.raises(ValueError):
        CandidateAnswer(text="", sampling=None, source="student")
    with pytest.raises(ValueError):
        CandidateAnswer(text="x", sampling=SamplingConfig(), source="ground_truth")


def test_sample_distinct_five_from_mock():
    candidates, degraded = sample_distinct(
        MockStudent(), COMPOSITE, PROMPT, 5, SamplingConfig(seed=7)
    )
    assert not degraded
    assert len(candidates) == 5
    normalized = {normalize_answer(c.text) for c in candidates}
    assert len(normalized) == 5
    assert all(c.source == "student" for c in candidates)
    # Every candidate records the exact config that produced it.
    assert all(c.sampling is not None for c in candidates)
    temperatures = [c.sampling.temperature for c in candidates]
    assert temperatures == [0.2, 0.5, 0.8, 1.0, 1.2]


def test_sample_distinct_deterministic():
    first, _ = sample_distinct(MockStudent(), COMPOSITE, PROMPT, 5, SamplingConfig(seed=3))
    second, _ = sample_distinct(MockStudent(), COMPOSITE, PROMPT, 5, SamplingConfig(seed=3))
    assert [c.text for c in first] == [c.text for c in second]


def test_sample_distinct_no_retries_when_first_round_suffices():
    student = CountingStudent(MockStudent())
    candidates, degraded = sample_distinct(student, COMPOSITE, PROMPT, 2, SamplingConfig(seed=1))
    assert len(candidates) == 2 and not degraded
    assert student.calls == 2


def test_sample_distinct_degenerate_backend():
    student = CountingStudent(ConstantStudent())
    with pytest.raises(DegenerateSamplingError):
        sample_distinct(student, COMPOSITE, PROMPT, 5, SamplingConfig(seed=1))
    assert student.calls == 20  # 4 rounds x 5 samples


def test_sample_distinct_requires_n_at_least_two():
    with pytest.raises(ValueError):
        sample_distinct(MockStudent(), COMPOSITE, PROMPT, 1, SamplingConfig())


def test_http_student_round_trip():
    def handler(request):
        import json

        body = json.loads(request.content)
        assert body["prompt"] == PROMPT
        assert body["image_path"].endswith("composite.png")
        return httpx.Response(200, json={"text": f"seed {body['seed']}"})

    student = HttpStudent(base_url="http://student.local/generate", transport=httpx.MockTransport(handler))
    text = student.generate(COMPOSITE, PROMPT, SamplingConfig(seed=5))
    assert text == "seed 5"


def test_http_student_unreachable():
    def handler(request):
        raise httpx.ConnectError("refused")

    student = HttpStudent(base_url="http://student.local/generate", transport=httpx.MockTransport(handler))
    with pytest.raises(StudentRequestError):
        student.generate(COMPOSITE, PROMPT, SamplingConfig())
