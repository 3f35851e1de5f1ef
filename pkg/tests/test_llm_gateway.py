import threading

import pytest

from newsbench.errors import CredentialError, NewsbenchError, TransientProviderError
from newsbench.llm_gateway import (
    CallableTransport,
    Gateway,
    HttpChatTransport,
    ModelSpec,
    PriceTable,
    TranscriptTransport,
    _RetryableFailure,
    make_transcript,
)

MODEL = ModelSpec(provider="mock", model_id="scripted", max_tokens=64)


def gateway_for(transport, prices=None, **kw):
    kw.setdefault("sleep", lambda s: None)
    return Gateway(transport=transport, prices=prices or PriceTable(), **kw)


def test_modelspec_validation():
    with pytest.raises(ValueError):
        ModelSpec(provider="weird", model_id="x")
    with pytest.raises(ValueError):
        ModelSpec(provider="mock", model_id="")
    with pytest.raises(ValueError):
        ModelSpec(provider="mock", model_id="x", temperature=-1)
    with pytest.raises(ValueError):
        ModelSpec(provider="mock", model_id="x", top_p=0)


def test_mock_echoes_scripted_response():
    gw = gateway_for(TranscriptTransport(make_transcript([("is it fresh?", "1")])))
    exchange = gw.complete(MODEL, "is it fresh?")
    assert exchange.response == "1"
    assert exchange.prompt_tokens == 3
    assert exchange.completion_tokens == 1


def test_mock_missing_prompt_is_loud():
    gw = gateway_for(TranscriptTransport({}))
    with pytest.raises(NewsbenchError, match="no response"):
        gw.complete(MODEL, "never scripted")


def test_retry_then_success(caplog):
    calls = {"n": 0}

    class Flaky:
        def send(self, model, prompt):
            calls["n"] += 1
            if calls["n"] <= 2:
                raise _RetryableFailure("HTTP 429")
            return "ok", 1, 1

    slept = []
    gw = Gateway(transport=Flaky(), prices=PriceTable(), sleep=slept.append)
    with caplog.at_level("INFO"):
        exchange = gw.complete(MODEL, "p")
    assert exchange.response == "ok"
    assert calls["n"] == 3
    assert len(slept) == 2
    assert slept[1] > slept[0]  # exponential growth despite jitter
    assert any("retry 2" in r.message for r in caplog.records)
    assert gw.ledger_report()["models"]["scripted"]["retries"] == 2


def test_retries_exhausted():
    class Dead:
        def send(self, model, prompt):
            raise _RetryableFailure("HTTP 503")

    gw = gateway_for(Dead(), retries=3)
    with pytest.raises(TransientProviderError, match="3 attempts"):
        gw.complete(MODEL, "p")


def test_missing_credentials_fatal(monkeypatch):
    for env in ("NEWSBENCH_API_KEY", "OPENAI_API_KEY"):
        monkeypatch.delenv(env, raising=False)
    transport = HttpChatTransport(base_url="https://unused.example")
    gw = gateway_for(transport)
    with pytest.raises(CredentialError):
        gw.complete(ModelSpec(provider="openai-compatible", model_id="gpt-x"), "p")


def test_ledger_zero_when_idle():
    gw = gateway_for(TranscriptTransport({}))
    report = gw.ledger_report()
    assert report["models"] == {}
    assert report["total"]["cost_usd"] == 0.0


def test_ledger_arithmetic_two_calls():
    prices = PriceTable({"scripted": {"usd_per_1m_input": 3.0, "usd_per_1m_output": 7.0}})
    prompt_a = " ".join(["tok"] * 100)
    prompt_b = " ".join(["kot"] * 100)
    fifty = " ".join(["w"] * 50)
    gw = gateway_for(
        TranscriptTransport(make_transcript([(prompt_a, fifty), (prompt_b, fifty)])), prices=prices
    )
    e1 = gw.complete(MODEL, prompt_a)
    e2 = gw.complete(MODEL, prompt_b)
    expected_each = 100 * 3.0 / 1e6 + 50 * 7.0 / 1e6
    assert e1.cost_usd == pytest.approx(expected_each)
    report = gw.ledger_report()
    assert report["models"]["scripted"]["calls"] == 2
    assert report["total"]["cost_usd"] == pytest.approx(2 * expected_each)
    assert report["total"]["cost_usd"] == pytest.approx(e1.cost_usd + e2.cost_usd)


def test_ledger_matches_independent_hand_sum():
    # ten generation-style calls; oracle sums the transcript by hand
    prices = PriceTable({"scripted": {"usd_per_1m_input": 2.0, "usd_per_1m_output": 8.0}})
    pairs = [(f"prompt {'x ' * n}", f"reply {'y ' * (2 * n)}") for n in range(10)]
    gw = gateway_for(TranscriptTransport(make_transcript(pairs)), prices=prices)
    for prompt, _ in pairs:
        gw.complete(MODEL, prompt)
    hand_ptok = sum(len(p.split()) for p, _ in pairs)
    hand_ctok = sum(len(r.split()) for _, r in pairs)
    hand_cost = hand_ptok * 2.0 / 1e6 + hand_ctok * 8.0 / 1e6
    report = gw.ledger_report()["models"]["scripted"]
    assert report["prompt_tokens"] == hand_ptok
    assert report["completion_tokens"] == hand_ctok
    assert report["cost_usd"] == pytest.approx(hand_cost)


def test_ledger_conservation_under_concurrency():
    prices = PriceTable({"scripted": {"usd_per_1m_input": 1.0, "usd_per_1m_output": 1.0}})
    gw = gateway_for(CallableTransport(lambda model, prompt: "r " * 5), prices=prices)
    threads = [
        threading.Thread(target=lambda: [gw.complete(MODEL, f"p {i} word") for i in range(20)])
        for _ in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    report = gw.ledger_report()
    assert report["models"]["scripted"]["calls"] == 160
    assert report["models"]["scripted"]["prompt_tokens"] == 160 * 3
    assert report["models"]["scripted"]["completion_tokens"] == 160 * 5


def test_price_table_default_asset_loads():
    table = PriceTable.default()
    rate_in, rate_out = table.rates("gpt-4.1-2025-04-14")
    assert rate_in > 0 and rate_out > rate_in
