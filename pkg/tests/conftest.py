import json
from datetime import datetime, timedelta, timezone

import pytest

from newsbench.corpus_store import CorpusSlice
from newsbench.feed_ingest import Article, article_id
from newsbench.llm_gateway import Gateway, ModelSpec, PriceTable, TranscriptTransport, make_transcript

UTC = timezone.utc

LONG_BODY = (
    "Pope Francis was admitted to Gemelli Hospital in Rome on February 14, 2025 for a "
    "respiratory infection, with physicians describing his condition as stable. The Vatican "
    "said the 88-year-old pontiff would continue limited duties while undergoing treatment, "
    "and medical staff confirmed a course of targeted antibiotics over several days."
)


def make_article(
    n: int = 0,
    *,
    title: str = None,
    body: str = None,
    published_at: datetime = None,
    source_name: str = "CNN",
    category: str = "general",
    url: str = None,
) -> Article:
    title = title if title is not None else f"Headline number {n}"
    body = body if body is not None else f"{LONG_BODY} Marker token art{n}."
    published_at = published_at or datetime(2025, 3, 22, 8, 0, 0, tzinfo=UTC) - timedelta(hours=n)
    url = url or f"https://example.com/news/{n}"
    return Article(
        id=article_id(url, title, published_at),
        title=title,
        published_at=published_at,
        author="Jane Doe",
        body=body,
        source_url=url,
        source_name=source_name,
        category=category,
    )


def make_slice(articles, as_of=None, window_days=1) -> CorpusSlice:
    as_of = as_of or max(a.published_at for a in articles)
    return CorpusSlice(window_days=window_days, as_of=as_of, articles=list(articles))


@pytest.fixture
def mock_model() -> ModelSpec:
    return ModelSpec(provider="mock", model_id="mock-agent", temperature=0.0, top_p=1.0, max_tokens=512)


def scripted_gateway(pairs, prices=None) -> Gateway:
    return Gateway(
        transport=TranscriptTransport(make_transcript(pairs)),
        prices=prices or PriceTable(),
        sleep=lambda s: None,
    )


def mcq_payload(i: int, answer: str, distractors, question: str = None) -> dict:
    choices = [answer] + list(distractors)
    # rotate so the gold letter varies with i
    rot = i % 4
    choices = choices[rot:] + choices[:rot]
    return {
        "question_idx": i,
        "question": question or f"As of March 22, 2025, what is detail {i}?",
        "choices": choices,
        "ground_truth": answer,
        "rationale": "stated in the article",
    }


def generation_response(article_n: int) -> str:
    objs = [
        mcq_payload(
            i,
            f"Answer {article_n}-{i}",
            [f"Foil {article_n}-{i}-a", f"Foil {article_n}-{i}-b", f"Foil {article_n}-{i}-c"],
            question=f"As of March 22, 2025, what is fact {i} of story {article_n}?",
        )
        for i in range(1, 6)
    ]
    return json.dumps(objs)
