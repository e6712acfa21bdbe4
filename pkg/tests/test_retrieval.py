from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memgate.retrieval import (
    CHANNEL_WEIGHTS,
    HIGH_PRECISION_GATE,
    HIGH_RECALL_WEIGHTS,
    ModeKind,
    RawContext,
    RetrievalMode,
    jaccard,
    normalize,
    retrieve,
    score_all,
    stack_frames,
    words,
)


def test_channel_weights_sum_to_one():
    assert math.isclose(sum(CHANNEL_WEIGHTS.values()), 1.0, abs_tol=1e-12)
    assert math.isclose(sum(HIGH_RECALL_WEIGHTS.values()), 1.0, abs_tol=1e-12)
    assert HIGH_RECALL_WEIGHTS["lexical"] > CHANNEL_WEIGHTS["lexical"]


def test_jaccard_examples():
    assert jaccard(frozenset(), frozenset()) == 0.0
    assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)
    assert jaccard({"a"}, {"a"}) == 1.0


def test_words_drop_numbers_and_lowercase():
    assert words("Port 8080 Already IN_USE") == ["port", "already", "in_use"]


def test_stack_frames_extracts_functions_and_modules():
    excerpt = 'File "/app/server/main.py", line 3, in start_server'
    assert stack_frames(excerpt) == {"main", "start_server"}


def test_normalize_channels():
    raw = RawContext(
        error_text="ModuleNotFoundError: no module named 'requests'",
        command="pytest -q",
        paths=("src/app/config.yaml",),
        env_metadata={"VIRTUAL_ENV": "/opt/venv"},
        session_id="s1",
    )
    prof = normalize(raw, session_rejections=2)
    assert {"modulenotfounderror", "module", "named", "requests"} <= prof.tokens
    assert "the" not in prof.tokens
    assert prof.command_signature == frozenset({"pytest", "q"})
    assert {"src", "app", "config"} == prof.path_signature
    assert {"requests", "virtual_env", "config.yaml"} <= prof.entities
    assert prof.session_rejections == 2 and prof.session_id == "s1"


def test_normalize_is_deterministic(dataset):
    for q in dataset.queries:
        assert normalize(q.raw) == normalize(q.raw)


def test_empty_bank_returns_nothing():
    from memgate.memory import MemoryBank

    assert retrieve(normalize(RawContext(error_text="boom")), MemoryBank()) == []


def test_scores_bounded_and_sorted(dataset):
    for q in dataset.paraphrases[:40]:
        cands = score_all(normalize(q.raw), dataset.bank)
        scores = [c.score for c in cands]
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores == sorted(scores, reverse=True)


def test_score_is_weighted_component_sum(dataset):
    q = dataset.queries[0]
    for c in score_all(normalize(q.raw), dataset.bank)[:5]:
        assert c.score == pytest.approx(sum(CHANNEL_WEIGHTS[ch] * v for ch, v in c.component_scores.items()))


def test_modes(dataset):
    prof = normalize(dataset.queries[3].raw)
    assert len(retrieve(prof, dataset.bank, RetrievalMode(k=3))) == 3
    assert len(retrieve(prof, dataset.bank, RetrievalMode(ModeKind.HIGH_RECALL, 3))) == 6
    for c in retrieve(prof, dataset.bank, RetrievalMode(ModeKind.HIGH_PRECISION, 3)):
        assert max(c.component_scores[ch] for ch in ("command", "path", "stack")) >= HIGH_PRECISION_GATE


def test_mode_rejects_bad_k():
    with pytest.raises(ValueError):
        RetrievalMode(k=0)


def test_canonical_query_finds_its_record(dataset):
    for q in dataset.queries:
        top = retrieve(normalize(q.raw), dataset.bank)[0]
        assert top.record_ref == q.gold_pattern_id


_sets = st.frozensets(st.sampled_from("abcdefgh"), max_size=8)


@settings(max_examples=200, deadline=None)
@given(a=_sets, b=_sets)
def test_jaccard_properties(a, b):
    j = jaccard(a, b)
    assert 0.0 <= j <= 1.0
    assert j == jaccard(b, a)
    if a and a == b:
        assert j == 1.0
