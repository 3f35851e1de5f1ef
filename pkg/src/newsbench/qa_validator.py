"""Two-stage quality gate for generated items: a free local pre-check for
mechanically detectable self-references, then the agent prompt whose reply
must be a bare "1" to keep the item."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .errors import NewsbenchError, SystemicFailureError
from .feed_ingest import Article
from .llm_gateway import Gateway, ModelSpec
from .qa_factory import McqItem, _asset, _SLOT_RE, release_date

logger = logging.getLogger(__name__)

STAGE_LOCAL = "local-precheck"
STAGE_AGENT = "agent"

# Case-insensitive phrases that mark a question as non-self-contained.
REJECT_PATTERNS = (
    "according to the article",
    "in the article",
    "the text indicates",
)

_VALIDATION_SLOTS = {"qa_pair", "article_release_date"}


@dataclass(frozen=True)
class ValidationVerdict:
    item_ref: str
    passed: bool
    stage: str
    raw_agent_output: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "item_ref": self.item_ref,
            "passed": self.passed,
            "stage": self.stage,
            "raw_agent_output": self.raw_agent_output,
        }


@lru_cache(maxsize=None)
def validation_template() -> str:
    template = _asset("validation_prompt.txt")
    unknown = sorted(set(_SLOT_RE.findall(template)) - _VALIDATION_SLOTS)
    if unknown:
        raise NewsbenchError(
            f"validation template has unresolved slots: {', '.join('{%s}' % s for s in unknown)}"
        )
    return template


def render_qa_pair(item: McqItem) -> str:
    return json.dumps(
        {
            "question": item.question,
            "choices": list(item.choices),
            "ground_truth": item.ground_truth,
        },
        indent=2,
        ensure_ascii=False,
    )


def build_validation_prompt(item: McqItem, article: Article) -> str:
    return (
        validation_template()
        .replace("{qa_pair}", render_qa_pair(item))
        .replace("{article_release_date}", release_date(article))
    )


def local_precheck(item: McqItem) -> ValidationVerdict:
    """Reject questions that reference their source or are empty."""
    question = item.question.strip()
    failed = not question or any(p in question.lower() for p in REJECT_PATTERNS)
    return ValidationVerdict(item_ref=item.item_id, passed=not failed, stage=STAGE_LOCAL)


def agent_passed(raw: str) -> bool:
    """Strict rule: the first non-whitespace character must be '1'."""
    stripped = raw.lstrip()
    return bool(stripped) and stripped[0] == "1"


def agent_validate(item: McqItem, article: Article, model: ModelSpec, gateway: Gateway) -> ValidationVerdict:
    exchange = gateway.complete(model, build_validation_prompt(item, article))
    return ValidationVerdict(
        item_ref=item.item_id,
        passed=agent_passed(exchange.response),
        stage=STAGE_AGENT,
        raw_agent_output=exchange.response,
    )


def validate_batch(
    items: list,
    articles_by_id: dict,
    model: ModelSpec,
    gateway: Gateway,
    max_parallel: int = 4,
) -> tuple:
    """Returns (kept items, one verdict per input item, input order kept).

    Items failing the local pre-check never reach the agent.  Agent transport
    failures count as failed verdicts; if they exceed half of the agent calls
    the whole batch aborts as a systemic failure.
    """
    verdicts: list = [local_precheck(item) for item in items]
    agent_slots = [i for i, v in enumerate(verdicts) if v.passed]

    errors = 0

    def run(idx: int) -> ValidationVerdict:
        item = items[idx]
        article = articles_by_id.get(item.article_id)
        if article is None:
            raise NewsbenchError(f"item {item.item_id} references unknown article {item.article_id}")
        return agent_validate(item, article, model, gateway)

    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        futures = {idx: pool.submit(run, idx) for idx in agent_slots}
        for idx in agent_slots:
            try:
                verdicts[idx] = futures[idx].result()
            except NewsbenchError as exc:
                errors += 1
                logger.warning("item %s: agent validation errored: %s", items[idx].item_id, exc)
                verdicts[idx] = ValidationVerdict(
                    item_ref=items[idx].item_id,
                    passed=False,
                    stage=STAGE_AGENT,
                    raw_agent_output=f"[transport error] {exc}",
                )

    if agent_slots and errors * 2 > len(agent_slots):
        raise SystemicFailureError(
            f"{errors}/{len(agent_slots)} agent validations errored; aborting batch"
        )

    kept = [item for item, verdict in zip(items, verdicts) if verdict.passed]
    return kept, verdicts
