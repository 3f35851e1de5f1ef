import json
import random
from datetime import datetime, timezone

import pytest

import newsbench.versioning as ver
from newsbench.errors import ConfigurationError, NewsbenchError
from newsbench.eval_harness import (
    EvalConfig,
    build_eval_prompt,
    extract_mcq_answer,
    judge_open_ended,
    run_eval,
    summarize,
)
from newsbench.llm_gateway import CallableTransport, Gateway, ModelSpec, PriceTable
from newsbench.qa_factory import OpenEndedItem, parse_generation_output
from newsbench.readers import abstain_reader, context_reader, perfect_reader
from newsbench.retrieval import build_bm25

from conftest import make_article, make_slice, mcq_payload

UTC = timezone.utc
GEN_AT = datetime(2025, 3, 22, 12, tzinfo=UTC)
TARGET = ModelSpec(provider="mock", model_id="mock-target")


def snapshot_fixture(n_articles=2, per_article=5):
    articles = [make_article(n, url=f"https://e.com/ev/{n}") for n in range(n_articles)]
    items = []
    for a_idx, article in enumerate(articles):
        objs = [
            mcq_payload(
                i,
                f"Answer {a_idx}-{i}",
                [f"Foil {a_idx}-{i}-x", f"Foil {a_idx}-{i}-y", f"Foil {a_idx}-{i}-z"],
                question=f"As of March 22, 2025, what is fact {i} of story {a_idx}?",
            )
            for i in range(1, per_article + 1)
        ]
        items.extend(parse_generation_output(json.dumps(objs), article, GEN_AT))
    open_ended = [
        OpenEndedItem(item_id=i.item_id, question=i.question, answer_span=i.ground_truth, article_id=i.article_id)
        for i in items
    ]
    sig = ver.mint_signature(TARGET, GEN_AT, rng=random.Random(0))
    return ver.package(items, open_ended, articles, sig)


def gateway_with(transport):
    return Gateway(transport=transport, prices=PriceTable(), sleep=lambda s: None)


# --- config invariants ----------------------------------------------------------


def test_retrieval_config_requires_fields():
    with pytest.raises(ConfigurationError):
        EvalConfig(setting="retrieval", target=TARGET)
    with pytest.raises(ConfigurationError):
        EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=2, window_days=1)
    EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=3, window_days=1)


def test_non_retrieval_config_forbids_fields():
    with pytest.raises(ConfigurationError):
        EvalConfig(setting="oracle", target=TARGET, k=3)
    with pytest.raises(ConfigurationError):
        EvalConfig(setting="no-context", target=TARGET, retriever="bm25")


# --- prompt construction -----------------------------------------------------------


def test_no_context_prompt_shape():
    snap = snapshot_fixture(1, 1)
    item = snap.items[0]
    config = EvalConfig(setting="no-context", target=TARGET)
    prompt = build_eval_prompt(item, config, [])
    assert prompt.startswith(f"Question: {item.question}. Provide the most accurate answer.")
    for letter, choice in zip("ABCD", item.choices):
        assert f"{letter}. {choice}" in prompt
    assert "Context:" not in prompt


def test_oracle_prompt_shape():
    snap = snapshot_fixture(1, 1)
    item = snap.items[0]
    article = snap.articles[0]
    config = EvalConfig(setting="oracle", target=TARGET)
    prompt = build_eval_prompt(item, config, [article])
    assert prompt.startswith("Context: ")
    assert article.body in prompt
    assert prompt.index("Context:") < prompt.index(f"Question: {item.question}")
    assert article.title in prompt and "2025-03-22" in prompt  # doc labeled title+date


def test_oracle_prompt_rejects_wrong_document():
    snap = snapshot_fixture(2, 1)
    config = EvalConfig(setting="oracle", target=TARGET)
    with pytest.raises(ValueError):
        build_eval_prompt(snap.items[0], config, [snap.articles[1]])


def test_retrieval_prompt_orders_documents_by_rank():
    snap = snapshot_fixture(3, 1)
    item = snap.items[0]
    config = EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=3, window_days=1)
    docs = snap.articles
    prompt = build_eval_prompt(item, config, docs)
    positions = [prompt.index(d.body) for d in docs]
    assert positions == sorted(positions)


def test_open_ended_prompt_omits_choices():
    snap = snapshot_fixture(1, 1)
    config = EvalConfig(setting="no-context", target=TARGET, format="open-ended")
    prompt = build_eval_prompt(snap.open_ended[0], config, [])
    assert "A." not in prompt
    assert "short phrase" in prompt


def test_context_budget_truncates_lowest_rank_first():
    snap = snapshot_fixture(3, 1)
    item = snap.items[0]
    full = EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=3, window_days=1)
    budget = len(build_eval_prompt(item, full, snap.articles[:2])) + 10
    config = EvalConfig(
        setting="retrieval", target=TARGET, retriever="bm25", k=3, window_days=1,
        context_char_budget=budget,
    )
    prompt = build_eval_prompt(item, config, snap.articles)
    assert snap.articles[0].body in prompt
    assert snap.articles[2].body not in prompt  # lowest rank dropped first


def test_prompt_injective_across_items():
    snap = snapshot_fixture(2, 5)
    config = EvalConfig(setting="no-context", target=TARGET)
    prompts = {build_eval_prompt(i, config, []) for i in snap.items}
    assert len(prompts) == len(snap.items)


# --- MCQ answer extraction ------------------------------------------------------------

CHOICES = ("St. Peter's Hospital", "Vatican Medical Center", "Gemelli Hospital", "Apostolic Palace Clinic")

EXTRACTION_TABLE = [
    ("C. Gemelli Hospital", "C"),
    ("C", "C"),
    ("(C)", "C"),
    ("The answer is (b)", "B"),
    ("b.", "B"),
    ("Answer: D", "D"),
    ("I believe A is correct", "A"),
    ("It was the Gemelli facility", "C"),  # distinctive token
    ("Gemelli Hospital", "C"),  # full choice text
    ("Vatican Medical Center treated him", "B"),
    ("A hospital treated him", "A"),  # the letter rule is literal: standalone uppercase wins
    ("The patient went to a hospital in Rome", None),  # lowercase article never matches
    ("I don't know.", None),
    ("", None),
    ("St. Peter's Hospital or Gemelli Hospital", None),  # two full matches -> ambiguous
    ("USA and NASA announced it", None),  # letters inside words don't count
    ("\n\nB\n", "B"),  # first non-empty line
]


@pytest.mark.parametrize("raw,expected", EXTRACTION_TABLE)
def test_extraction_decision_table(raw, expected):
    assert extract_mcq_answer(raw, CHOICES) == expected


def test_extraction_prefers_first_line_letter_over_body_mentions():
    raw = "D\nAlthough Gemelli Hospital is plausible, D is right."
    assert extract_mcq_answer(raw, CHOICES) == "D"


# --- open-ended judge ------------------------------------------------------------------

JUDGE_TABLE = [
    ("gemelli hospital.", "Gemelli Hospital", True),
    ("Gemelli Hospital", "Gemelli Hospital", True),
    ("GEMELLI HOSPITAL!!!", "Gemelli Hospital", True),
    ("  gemelli   hospital  ", "Gemelli Hospital", True),
    ("\n\nGemelli Hospital\nmore detail follows", "Gemelli Hospital", True),
    ("\n  \nwrong answer\nGemelli Hospital", "Gemelli Hospital", False),
    ("St. Peter's Hospital", "Gemelli Hospital", False),
    ("The Gemelli Hospital", "Gemelli Hospital", False),
    ("'Gemelli Hospital'", "Gemelli Hospital", True),
    ("“Gemelli Hospital”", "Gemelli Hospital", True),
    ("1,957", "1957", True),
    ("$4.21", "4.21", True),
    ("2.5% of its GDP", "2.5% of its GDP", True),
    ("3% of its GDP", "2.5% of its GDP", False),
    ("dr ben underwood", "Dr. Ben Underwood", True),
    ("Dr. Ben Underwood.", "Dr. Ben Underwood", True),
    ("Ben Underwood", "Dr. Ben Underwood", False),
    ("", "Gemelli Hospital", False),
    ("   \n\t\n ", "Gemelli Hospital", False),
    ("The Lancet Neurology", "The Lancet Neurology", True),
    ("the lancet neurology", "The Lancet Neurology", True),
    ("The Lancet", "The Lancet Neurology", False),
    ("Gemelli  Hospital\t", "Gemelli Hospital", True),
]


@pytest.mark.parametrize("raw,gold,expected", JUDGE_TABLE)
def test_judge_normalization_table(raw, gold, expected):
    assert judge_open_ended(raw, gold) is expected


def test_judge_llm_fallback_consulted_on_mismatch():
    judge_model = ModelSpec(provider="mock", model_id="mock-judge")
    gw = gateway_with(CallableTransport(lambda m, p: "1"))
    assert judge_open_ended("The Gemelli facility", "Gemelli Hospital", judge_model, gw) is True
    gw0 = gateway_with(CallableTransport(lambda m, p: "0"))
    assert judge_open_ended("The Gemelli facility", "Gemelli Hospital", judge_model, gw0) is False


# --- run_eval ----------------------------------------------------------------------------


def test_oracle_with_perfect_reader_is_100():
    snap = snapshot_fixture()
    config = EvalConfig(setting="oracle", target=TARGET)
    records, summary = run_eval(snap, config, gateway_with(perfect_reader(snap)))
    assert summary.accuracy == 1.0
    assert summary.n == len(snap.items)
    assert all(r.correct for r in records)


def test_abstainer_is_0_with_no_answer_found():
    snap = snapshot_fixture()
    config = EvalConfig(setting="no-context", target=TARGET)
    records, summary = run_eval(snap, config, gateway_with(abstain_reader()))
    assert summary.accuracy == 0.0
    assert summary.failure_modes == {"no-answer-found": len(snap.items)}
    assert all(r.failure_mode == "no-answer-found" for r in records)


def test_always_a_reader_matches_gold_letter_fraction():
    snap = snapshot_fixture()
    gold_a = sum(1 for i in snap.items if i.gold_letter == "A")
    assert 0 < gold_a < len(snap.items)  # fixture shuffles gold letters
    config = EvalConfig(setting="no-context", target=TARGET)
    _, summary = run_eval(snap, config, gateway_with(CallableTransport(lambda m, p: "A")))
    assert summary.accuracy == pytest.approx(gold_a / len(snap.items))


def test_context_reader_ordering_oracle_retrieval_nocontext():
    snap = snapshot_fixture(4, 3)
    pool = snap.articles
    index = build_bm25(make_slice(pool))

    def acc(config, **kw):
        _, summary = run_eval(snap, config, gateway_with(context_reader(snap)), **kw)
        return summary.accuracy

    oracle = acc(EvalConfig(setting="oracle", target=TARGET))
    retrieval = acc(
        EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=3, window_days=1),
        retrieval_pool=pool,
        index=index,
    )
    nocontext = acc(EvalConfig(setting="no-context", target=TARGET))
    assert oracle == 1.0
    assert nocontext == 0.0
    assert oracle >= retrieval >= nocontext


def test_summary_recomputable_from_records():
    snap = snapshot_fixture()
    config = EvalConfig(setting="oracle", target=TARGET)
    records, summary = run_eval(snap, config, gateway_with(context_reader(snap)))
    recount = sum(1 for r in records if r.correct)
    assert summary.correct == recount
    assert summary.accuracy == recount / summary.n
    assert summary.n_total == len(records)
    rebuilt = summarize(records, config, {})
    assert rebuilt.accuracy == summary.accuracy


def test_open_ended_eval_with_perfect_reader():
    snap = snapshot_fixture()
    config = EvalConfig(setting="oracle", target=TARGET, format="open-ended")
    records, summary = run_eval(snap, config, gateway_with(perfect_reader(snap)))
    assert summary.accuracy == 1.0
    assert summary.n == len(snap.open_ended)


def test_judge_error_excluded_from_denominator():
    snap = snapshot_fixture(1, 5)
    judge_model = ModelSpec(provider="mock", model_id="mock-judge")

    def flaky_judge(model, prompt):
        if model.model_id == "mock-judge":
            raise NewsbenchError("judge transport down")
        return "totally wrong answer"

    config = EvalConfig(setting="no-context", target=TARGET, format="open-ended", judge=judge_model)
    records, summary = run_eval(snap, config, gateway_with(CallableTransport(flaky_judge)))
    assert summary.failure_modes["judge-error"] == len(snap.open_ended)
    assert summary.n == 0
    assert summary.n_total == len(snap.open_ended)
    assert summary.accuracy == 0.0


def test_retrieval_requires_pool_overlap():
    snap = snapshot_fixture(2, 2)
    strangers = [make_article(50 + n, url=f"https://e.com/zz/{n}") for n in range(3)]
    index = build_bm25(make_slice(strangers))
    config = EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=3, window_days=1)
    with pytest.raises(ConfigurationError, match="corpus window"):
        run_eval(snap, config, gateway_with(abstain_reader()), retrieval_pool=strangers, index=index)


def test_retrieval_k_limits_context_docs():
    snap = snapshot_fixture(5, 1)
    pool = snap.articles
    index = build_bm25(make_slice(pool))
    config = EvalConfig(setting="retrieval", target=TARGET, retriever="bm25", k=1, window_days=1)
    records, _ = run_eval(
        snap, config, gateway_with(abstain_reader()), retrieval_pool=pool, index=index
    )
    for record in records:
        assert record.prompt.count("(2025-03-2") <= 1  # at most one doc label


def test_open_ended_caps_completion_tokens():
    snap = snapshot_fixture(1, 1)
    seen = []

    def spy(model, prompt):
        seen.append(model.max_tokens)
        return "whatever"

    config = EvalConfig(
        setting="no-context",
        target=ModelSpec(provider="mock", model_id="m", max_tokens=4096),
        format="open-ended",
    )
    run_eval(snap, config, gateway_with(CallableTransport(spy)))
    assert seen == [100]


def test_run_eval_deterministic_under_mock():
    snap = snapshot_fixture()
    config = EvalConfig(setting="oracle", target=TARGET, seed=7)
    r1, s1 = run_eval(snap, config, gateway_with(perfect_reader(snap)))
    r2, s2 = run_eval(snap, config, gateway_with(perfect_reader(snap)))
    assert [r.to_dict() for r in r1] == [r.to_dict() for r in r2]
    assert s1.to_dict() == s2.to_dict()
