"""Scores a target model on a dataset snapshot under three access regimes:
question only, question plus the gold article, or question plus top-k
retrieved articles.  Answers are extracted deterministically (MCQ cascade,
open-ended first-line judge) so every failure is a recorded outcome, not a
silent guess."""

from __future__ import annotations

import hashlib
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ConfigurationError, NewsbenchError
from .feed_ingest import Article
from .io_utils import canonical_json
from .llm_gateway import Gateway, ModelSpec
from .qa_factory import McqItem
from .qa_validator import agent_passed
from .retrieval.bm25 import Bm25Index, query_bm25
from .retrieval.dense import DenseIndex, EmbedClient, query_dense
from .textnorm import normalize_answer
from .versioning import DatasetSnapshot

logger = logging.getLogger(__name__)

SETTINGS = ("no-context", "oracle", "retrieval")
RETRIEVERS = ("bm25", "dense-single", "dense-late")
FORMATS = ("mcq", "open-ended")
KS = (1, 3, 5, 10)
WINDOWS = (1, 5, 10)

LETTERS = "ABCD"
OPEN_ENDED_MAX_TOKENS = 100

FAIL_NO_ANSWER = "no-answer-found"
FAIL_JUDGE = "judge-error"

_SHORT_ANSWER_NOTE = "Answer with a short phrase of at most 10 tokens."


@dataclass(frozen=True)
class EvalConfig:
    setting: str
    target: ModelSpec
    format: str = "mcq"
    seed: int = 0
    retriever: Optional[str] = None
    k: Optional[int] = None
    window_days: Optional[int] = None
    context_char_budget: Optional[int] = None
    judge: Optional[ModelSpec] = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigurationError(f"unknown setting {self.setting!r}")
        if self.format not in FORMATS:
            raise ConfigurationError(f"unknown format {self.format!r}")
        if self.setting == "retrieval":
            if self.retriever not in RETRIEVERS:
                raise ConfigurationError("retrieval setting requires a retriever")
            if self.k not in KS:
                raise ConfigurationError(f"retrieval setting requires k in {KS}")
            if self.window_days not in WINDOWS:
                raise ConfigurationError(f"retrieval setting requires window_days in {WINDOWS}")
        else:
            if self.retriever is not None or self.k is not None or self.window_days is not None:
                raise ConfigurationError(f"{self.setting} setting forbids retriever/k/window_days")

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "format": self.format,
            "seed": self.seed,
            "retriever": self.retriever,
            "k": self.k,
            "window_days": self.window_days,
            "context_char_budget": self.context_char_budget,
            "target": {
                "provider": self.target.provider,
                "model_id": self.target.model_id,
                "temperature": self.target.temperature,
                "top_p": self.target.top_p,
                "max_tokens": self.target.max_tokens,
            },
        }

    def config_hash(self) -> str:
        return hashlib.md5(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class EvalRecord:
    item_id: str
    prompt: str
    raw_response: str
    extracted_answer: Optional[str]
    correct: bool
    failure_mode: Optional[str] = None
    context_truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "prompt": self.prompt,
            "raw_response": self.raw_response,
            "extracted_answer": self.extracted_answer,
            "correct": self.correct,
            "failure_mode": self.failure_mode,
            "context_truncated": self.context_truncated,
        }


@dataclass
class EvalSummary:
    config: dict
    n: int  # items that entered the accuracy denominator
    n_total: int
    correct: int
    accuracy: float
    failure_modes: dict = field(default_factory=dict)
    ledger: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n": self.n,
            "n_total": self.n_total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "failure_modes": self.failure_modes,
            "ledger": self.ledger,
        }


# --- prompt construction ------------------------------------------------------


def _doc_block(article: Article) -> str:
    return f"{article.title} ({article.published_at.strftime('%Y-%m-%d')})\n{article.body}"


def _choices_block(choices) -> str:
    return "\n".join(f"{LETTERS[i]}. {choice}" for i, choice in enumerate(choices))


def _assemble(question: str, choices, config: EvalConfig, context_docs: list) -> tuple:
    """Returns (prompt, truncated).  Context documents go rank-1 first; when
    a char budget is set, whole documents are dropped lowest-rank first."""
    tail = _choices_block(choices) if choices is not None else _SHORT_ANSWER_NOTE

    def render(docs: list) -> str:
        if config.setting == "no-context":
            return f"Question: {question}. Provide the most accurate answer.\n{tail}"
        blocks = "\n\n".join(_doc_block(d) for d in docs)
        return f"Context: {blocks}. Question: {question}. Provide the most accurate answer.\n{tail}"

    docs = list(context_docs)
    prompt = render(docs)
    truncated = False
    budget = config.context_char_budget
    while budget is not None and len(prompt) > budget and docs:
        docs.pop()  # lowest-ranked document first
        truncated = True
        prompt = render(docs)
    return prompt, truncated


def build_eval_prompt(item, config: EvalConfig, context_docs: list) -> str:
    """Render the evaluation prompt for one item under the given config."""
    if config.setting == "no-context" and context_docs:
        raise ValueError("no-context prompts take no documents")
    if config.setting == "oracle":
        if len(context_docs) != 1 or context_docs[0].id != item.article_id:
            raise ValueError("oracle prompts take exactly the gold article")
    if config.setting == "retrieval" and config.k is not None and len(context_docs) > config.k:
        raise ValueError("retrieval prompts take at most k documents")
    choices = item.choices if isinstance(item, McqItem) and config.format == "mcq" else None
    prompt, _ = _assemble(item.question, choices, config, context_docs)
    return prompt


# --- answer extraction ---------------------------------------------------------

_UPPER_LETTER_RE = re.compile(r"\b([A-D])\b")
_BRACKET_LETTER_RE = re.compile(r"[\(\[]\s*([a-d])\s*[\)\]]|\b([a-d])[\.\)]")


def first_nonempty_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


def extract_mcq_answer(raw: str, choices) -> Optional[str]:
    """Deterministic extraction cascade; None means no-answer-found.

    1. standalone letter on the first non-empty line (uppercase anywhere,
       lowercase only when delimited, so the article "a" never matches);
    2. unique choice whose normalized text occurs in the response;
    3. unique choice owning a distinctive token that occurs in the response.
    """
    line = first_nonempty_line(raw)
    m = _UPPER_LETTER_RE.search(line)
    if m:
        return m.group(1)
    m = _BRACKET_LETTER_RE.search(line)
    if m:
        return (m.group(1) or m.group(2)).upper()

    norm_raw = f" {normalize_answer(raw)} "
    contained = [
        i for i, c in enumerate(choices) if normalize_answer(c) and f" {normalize_answer(c)} " in norm_raw
    ]
    if len(contained) == 1:
        return LETTERS[contained[0]]

    raw_tokens = set(normalize_answer(raw).split())
    token_sets = [set(normalize_answer(c).split()) for c in choices]
    hits = []
    for i, tokens in enumerate(token_sets):
        others = set().union(*(token_sets[j] for j in range(len(token_sets)) if j != i))
        if (tokens - others) & raw_tokens:
            hits.append(i)
    if len(hits) == 1:
        return LETTERS[hits[0]]
    return None


_JUDGE_PROMPT = (
    'Gold answer: {gold}\nCandidate answer: {candidate}\n'
    'Output "1" if the candidate names the same answer as the gold answer, and "0" otherwise.'
)


def judge_open_ended(
    raw: str,
    gold_span: str,
    judge: Optional[ModelSpec] = None,
    gateway: Optional[Gateway] = None,
) -> bool:
    """String-equality judge over the first non-empty line after normalizing
    case, punctuation and whitespace; an LLM fallback (off by default) may
    rescue formatting noise on mismatch."""
    line = first_nonempty_line(raw)
    if normalize_answer(line) == normalize_answer(gold_span):
        return True
    if judge is None or gateway is None:
        return False
    exchange = gateway.complete(judge, _JUDGE_PROMPT.format(gold=gold_span, candidate=line))
    return agent_passed(exchange.response)


# --- run loop ------------------------------------------------------------------


def run_eval(
    snapshot: DatasetSnapshot,
    config: EvalConfig,
    gateway: Gateway,
    retrieval_pool: Optional[list] = None,
    index: Optional[object] = None,
    embed_client: Optional[EmbedClient] = None,
    max_parallel: int = 4,
) -> tuple:
    """Evaluate every item; returns (records, summary).

    For the retrieval setting the caller provides the article pool and a
    prebuilt index over it; mismatches are rejected before any model call.
    """
    items = snapshot.items if config.format == "mcq" else snapshot.open_ended
    articles = snapshot.articles_by_id()

    pool_by_id: dict = {}
    if config.setting == "retrieval":
        if index is None or retrieval_pool is None:
            raise ConfigurationError("retrieval setting needs an index and its article pool")
        if isinstance(index, DenseIndex) and embed_client is None:
            raise ConfigurationError("dense retrieval needs an embedding client")
        pool_by_id = {a.id: a for a in retrieval_pool}
        if not pool_by_id:
            raise ConfigurationError("retrieval pool is empty")
        gold_ids = {it.article_id for it in items}
        if not (gold_ids & set(pool_by_id)):
            raise ConfigurationError(
                "retrieval pool contains none of the snapshot's source articles; "
                "check the corpus window against the dataset dates"
            )
    if config.setting == "oracle":
        missing = [it.item_id for it in items if it.article_id not in articles]
        if missing:
            raise ConfigurationError(f"snapshot lacks gold articles for items: {missing[:3]}")

    target = config.target
    if config.format == "open-ended":
        target = replace(target, max_tokens=min(target.max_tokens, OPEN_ENDED_MAX_TOKENS))

    def context_for(item) -> list:
        if config.setting == "no-context":
            return []
        if config.setting == "oracle":
            return [articles[item.article_id]]
        if isinstance(index, Bm25Index):
            ranked = query_bm25(index, item.question, config.k, query_id=item.item_id)
        else:
            ranked = query_dense(index, item.question, config.k, embed_client, query_id=item.item_id)
        return [pool_by_id[doc_id] for doc_id, _ in ranked.entries]

    def evaluate(item) -> EvalRecord:
        docs = context_for(item)
        choices = item.choices if config.format == "mcq" else None
        prompt, truncated = _assemble(item.question, choices, config, docs)
        exchange = gateway.complete(target, prompt)
        raw = exchange.response
        if config.format == "mcq":
            letter = extract_mcq_answer(raw, item.choices)
            return EvalRecord(
                item_id=item.item_id,
                prompt=prompt,
                raw_response=raw,
                extracted_answer=letter,
                correct=letter == item.gold_letter,
                failure_mode=None if letter else FAIL_NO_ANSWER,
                context_truncated=truncated,
            )
        line = first_nonempty_line(raw)
        if not line:
            return EvalRecord(
                item_id=item.item_id,
                prompt=prompt,
                raw_response=raw,
                extracted_answer=None,
                correct=False,
                failure_mode=FAIL_NO_ANSWER,
                context_truncated=truncated,
            )
        try:
            verdict = judge_open_ended(raw, item.answer_span, config.judge, gateway)
        except NewsbenchError as exc:
            logger.warning("item %s: judge failed: %s", item.item_id, exc)
            return EvalRecord(
                item_id=item.item_id,
                prompt=prompt,
                raw_response=raw,
                extracted_answer=line,
                correct=False,
                failure_mode=FAIL_JUDGE,
                context_truncated=truncated,
            )
        return EvalRecord(
            item_id=item.item_id,
            prompt=prompt,
            raw_response=raw,
            extracted_answer=line,
            correct=verdict,
            failure_mode=None,
            context_truncated=truncated,
        )

    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        records = list(pool.map(evaluate, items))

    summary = summarize(records, config, gateway.ledger_report())
    return records, summary


def summarize(records: list, config: EvalConfig, ledger: dict) -> EvalSummary:
    """Aggregate records; judge-error items leave the denominator entirely."""
    failure_modes: dict = {}
    for rec in records:
        if rec.failure_mode:
            failure_modes[rec.failure_mode] = failure_modes.get(rec.failure_mode, 0) + 1
    judged_out = failure_modes.get(FAIL_JUDGE, 0)
    n = len(records) - judged_out
    correct = sum(1 for r in records if r.correct)
    return EvalSummary(
        config=config.to_dict(),
        n=n,
        n_total=len(records),
        correct=correct,
        accuracy=(correct / n) if n else 0.0,
        failure_modes=failure_modes,
        ledger=ledger,
    )
