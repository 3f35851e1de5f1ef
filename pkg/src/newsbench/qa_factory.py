"""Question generation: drive the agent prompt over each article, recover the
JSON array it returns, and keep only items that satisfy the multiple-choice
contract.  Also derives the open-ended variant for items whose answer is a
short verbatim span of the article."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Optional

from .errors import GenerationParseError, NewsbenchError, SystemicFailureError
from .feed_ingest import Article
from .llm_gateway import Gateway, ModelSpec
from .textnorm import contains_span, span_token_count

logger = logging.getLogger(__name__)

MAX_ITEMS_PER_ARTICLE = 5
MAX_SPAN_TOKENS = 10

_GENERATION_SLOTS = {"article_title", "article_text", "article_release_date"}
_SLOT_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class McqItem:
    question_idx: int
    question: str
    choices: tuple
    ground_truth: str
    rationale: str
    article_id: str
    generated_at: datetime

    @property
    def item_id(self) -> str:
        key = f"{self.article_id}\n{self.question_idx}\n{self.question}"
        return hashlib.md5(key.encode("utf-8")).hexdigest()

    @property
    def gold_letter(self) -> str:
        return "ABCD"[self.choices.index(self.ground_truth)]

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question_idx": self.question_idx,
            "question": self.question,
            "choices": list(self.choices),
            "ground_truth": self.ground_truth,
            "rationale": self.rationale,
            "article_id": self.article_id,
            "generated_at": self.generated_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "McqItem":
        return cls(
            question_idx=d["question_idx"],
            question=d["question"],
            choices=tuple(d["choices"]),
            ground_truth=d["ground_truth"],
            rationale=d["rationale"],
            article_id=d["article_id"],
            generated_at=datetime.fromisoformat(d["generated_at"]),
        )


@dataclass(frozen=True)
class OpenEndedItem:
    item_id: str
    question: str
    answer_span: str
    article_id: str

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "answer_span": self.answer_span,
            "article_id": self.article_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OpenEndedItem":
        return cls(
            item_id=d["item_id"],
            question=d["question"],
            answer_span=d["answer_span"],
            article_id=d["article_id"],
        )


@dataclass
class GenerationOutcome:
    items: list
    failures: list  # (article_id, error text)
    attempted: int


def _asset(name: str) -> str:
    return (Path(__file__).parent / "assets" / name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def generation_template() -> str:
    template = _asset("generation_prompt.txt")
    unknown = sorted(set(_SLOT_RE.findall(template)) - _GENERATION_SLOTS)
    if unknown:
        raise NewsbenchError(
            f"generation template has unresolved slots: {', '.join('{%s}' % s for s in unknown)}"
        )
    return template


def release_date(article: Article) -> str:
    return article.published_at.strftime("%Y-%m-%d")


def build_generation_prompt(article: Article) -> str:
    template = generation_template()
    return (
        template.replace("{article_title}", article.title)
        .replace("{article_text}", article.body)
        .replace("{article_release_date}", release_date(article))
    )


def _balanced_arrays(text: str) -> list:
    """All top-level bracket-balanced ``[...]`` substrings, string-aware."""
    spans = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "[":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "]":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append(text[start : i + 1])
    return spans


def recover_json_array(raw: str) -> list:
    """Pull a JSON array out of prose/code fences; longest candidate wins."""
    cleaned = re.sub(r"```[a-zA-Z]*", "", raw)
    candidates = sorted(_balanced_arrays(cleaned), key=len, reverse=True)
    for cand in candidates:
        try:
            parsed = json.loads(cand)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, list):
            return parsed
    raise GenerationParseError("no parseable JSON array in agent output", raw=raw)


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def parse_generation_output(
    raw: str,
    article: Article,
    generated_at: datetime,
    drops: Optional[list] = None,
) -> list:
    """Validate each object of the recovered array; bad objects are dropped
    individually (reason recorded), good ones become McqItems, at most 5."""
    parsed = recover_json_array(raw)
    items: list = []
    for pos, obj in enumerate(parsed):
        reason = _check_item(obj)
        if reason:
            logger.warning("article %s: dropped generated item %d: %s", article.id, pos, reason)
            if drops is not None:
                drops.append((pos, reason))
            continue
        if len(items) >= MAX_ITEMS_PER_ARTICLE:
            if drops is not None:
                drops.append((pos, "beyond per-article item limit"))
            continue
        items.append(
            McqItem(
                question_idx=int(obj["question_idx"]),
                question=obj["question"].strip(),
                choices=tuple(obj["choices"]),
                ground_truth=obj["ground_truth"],
                rationale=str(obj.get("rationale", "")),
                article_id=article.id,
                generated_at=generated_at,
            )
        )
    return items


def _check_item(obj) -> Optional[str]:
    if not isinstance(obj, dict):
        return "not a JSON object"
    question = obj.get("question")
    if not isinstance(question, str) or not question.strip():
        return "question missing or empty"
    idx = obj.get("question_idx")
    if not isinstance(idx, int) or not (1 <= idx <= 5):
        return f"question_idx {idx!r} outside 1..5"
    choices = obj.get("choices")
    if not isinstance(choices, list) or len(choices) != 4 or not all(isinstance(c, str) for c in choices):
        return "choices must be exactly 4 strings"
    if len({_normalize_ws(c) for c in choices}) != 4:
        return "choices not pairwise distinct"
    truth = obj.get("ground_truth")
    if not isinstance(truth, str) or choices.count(truth) != 1:
        return "ground_truth does not match exactly one choice"
    return None


def generate_for_corpus(
    articles: list,
    model: ModelSpec,
    gateway: Gateway,
    generated_at: datetime,
    max_articles_per_source: Optional[int] = None,
    max_parallel: int = 4,
) -> GenerationOutcome:
    """One agent call per article; per-article failures are recorded, not
    fatal, unless more than half the batch fails."""
    if max_articles_per_source is not None:
        taken: dict = {}
        limited = []
        for art in articles:
            taken[art.source_name] = taken.get(art.source_name, 0) + 1
            if taken[art.source_name] <= max_articles_per_source:
                limited.append(art)
        articles = limited

    def run(article: Article):
        prompt = build_generation_prompt(article)
        exchange = gateway.complete(model, prompt)
        return parse_generation_output(exchange.response, article, generated_at)

    items: list = []
    failures: list = []
    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        futures = [pool.submit(run, art) for art in articles]
        for art, fut in zip(articles, futures):
            try:
                parsed = fut.result()
            except NewsbenchError as exc:
                failures.append((art.id, str(exc)))
                logger.warning("article %s: generation failed: %s", art.id, exc)
                continue
            items.extend(sorted(parsed, key=lambda i: i.question_idx))

    if articles and len(failures) * 2 > len(articles):
        raise SystemicFailureError(
            f"{len(failures)}/{len(articles)} articles failed generation; "
            "suspect prompt or provider regression"
        )
    return GenerationOutcome(items=items, failures=failures, attempted=len(articles))


def derive_open_ended(item: McqItem, article: Article) -> Optional[OpenEndedItem]:
    """Open-ended twin of an MCQ item: same question, the correct choice as
    the gold span.  Returns None (item stays MCQ-only) when the answer is not
    a short verbatim span of the article body."""
    if span_token_count(item.ground_truth) > MAX_SPAN_TOKENS:
        return None
    if not contains_span(article.body, item.ground_truth):
        return None
    return OpenEndedItem(
        item_id=item.item_id,
        question=item.question,
        answer_span=item.ground_truth,
        article_id=item.article_id,
    )
