"""Chat-completion gateway shared by the generation, validation, judging and
evaluation stages: one wire dialect (OpenAI-style JSON), bounded retries,
per-model concurrency caps, and a token/cost ledger.

Offline runs swap the HTTP transport for a scripted transcript keyed by
prompt hash, which makes every downstream artifact reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import requests
import yaml

from .errors import CredentialError, NewsbenchError, TransientProviderError

logger = logging.getLogger(__name__)

PROVIDERS = ("openai-compatible", "mock")

API_KEY_ENVS = ("NEWSBENCH_API_KEY", "OPENAI_API_KEY")
BASE_URL_ENV = "NEWSBENCH_API_BASE"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

DEFAULT_RETRIES = 5
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_MAX_CONCURRENCY = 4


@dataclass(frozen=True)
class ModelSpec:
    provider: str
    model_id: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ValueError(f"unknown provider {self.provider!r}")
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatExchange:
    prompt: str
    response: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: int
    cost_usd: float


class _RetryableFailure(Exception):
    """Internal marker for 429/5xx/connection errors."""


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# --- price table ------------------------------------------------------------


class PriceTable:
    """USD per million tokens, keyed by model_id. Unknown models cost 0."""

    def __init__(self, rates: Optional[dict] = None):
        self._rates = rates or {}
        self._warned: set = set()

    @classmethod
    def load(cls, path) -> "PriceTable":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls(raw)

    @classmethod
    def default(cls) -> "PriceTable":
        return cls.load(Path(__file__).parent / "assets" / "prices.yaml")

    def rates(self, model_id: str) -> tuple:
        entry = self._rates.get(model_id)
        if entry is None:
            if model_id not in self._warned:
                logger.warning("no price entry for model %r; cost recorded as 0", model_id)
                self._warned.add(model_id)
            return (0.0, 0.0)
        return (float(entry["usd_per_1m_input"]), float(entry["usd_per_1m_output"]))

    def cost(self, model_id: str, prompt_tokens: int, completion_tokens: int) -> float:
        rate_in, rate_out = self.rates(model_id)
        return prompt_tokens * rate_in / 1e6 + completion_tokens * rate_out / 1e6


# --- ledger -----------------------------------------------------------------


@dataclass
class _LedgerRow:
    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    retries: int = 0


class Ledger:
    """Thread-safe per-model call/token accumulator."""

    def __init__(self, prices: PriceTable):
        self._prices = prices
        self._rows: dict = {}
        self._lock = threading.Lock()

    def record(self, model_id: str, exchange: ChatExchange, retries: int = 0) -> None:
        with self._lock:
            row = self._rows.setdefault(model_id, _LedgerRow())
            row.calls += 1
            row.prompt_tokens += exchange.prompt_tokens
            row.completion_tokens += exchange.completion_tokens
            row.retries += retries

    def report(self) -> dict:
        """Exact sums per model plus a grand total; JSON-serializable."""
        with self._lock:
            models = {}
            total = {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "cost_usd": 0.0}
            for model_id in sorted(self._rows):
                row = self._rows[model_id]
                cost = self._prices.cost(model_id, row.prompt_tokens, row.completion_tokens)
                models[model_id] = {
                    "calls": row.calls,
                    "prompt_tokens": row.prompt_tokens,
                    "completion_tokens": row.completion_tokens,
                    "retries": row.retries,
                    "cost_usd": cost,
                }
                total["calls"] += row.calls
                total["prompt_tokens"] += row.prompt_tokens
                total["completion_tokens"] += row.completion_tokens
                total["cost_usd"] += cost
            return {"models": models, "total": total}


# --- transports -------------------------------------------------------------


class HttpChatTransport:
    """POST {base_url}/chat/completions with the standard JSON body."""

    def __init__(self, base_url: Optional[str] = None, timeout: float = 120.0):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.timeout = timeout

    def _api_key(self) -> str:
        for env in API_KEY_ENVS:
            key = os.environ.get(env, "").strip()
            if key:
                return key
        raise CredentialError(f"no API key in environment (set one of {', '.join(API_KEY_ENVS)})")

    def send(self, model: ModelSpec, prompt: str) -> tuple:
        key = self._api_key()
        body = {
            "model": model.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": model.temperature,
            "top_p": model.top_p,
            "max_tokens": model.max_tokens,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise _RetryableFailure(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise CredentialError(f"provider rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _RetryableFailure(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise NewsbenchError(f"provider error HTTP {resp.status_code}: {resp.text[:500]}")
        payload = resp.json()
        text = payload["choices"][0]["message"]["content"]
        usage = payload.get("usage", {})
        ptok = int(usage.get("prompt_tokens", len(prompt.split())))
        ctok = int(usage.get("completion_tokens", len(text.split())))
        return text, ptok, ctok


class TranscriptTransport:
    """Deterministic mock: maps sha256(prompt) to a scripted response."""

    def __init__(self, mapping: dict):
        self.mapping = mapping

    @classmethod
    def from_file(cls, path) -> "TranscriptTransport":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(raw, dict) and "exchanges" in raw:
            raw = {prompt_hash(e["prompt"]): e["response"] for e in raw["exchanges"]}
        return cls(raw)

    def send(self, model: ModelSpec, prompt: str) -> tuple:
        key = prompt_hash(prompt)
        if key not in self.mapping:
            raise NewsbenchError(
                f"transcript has no response for prompt hash {key[:12]}… "
                f"(prompt starts {prompt[:80]!r})"
            )
        text = self.mapping[key]
        return text, len(prompt.split()), len(text.split())


class CallableTransport:
    """Mock backed by a function of the prompt; used for behavioral readers."""

    def __init__(self, fn: Callable[[ModelSpec, str], str]):
        self.fn = fn

    def send(self, model: ModelSpec, prompt: str) -> tuple:
        text = self.fn(model, prompt)
        return text, len(prompt.split()), len(text.split())


def make_transcript(pairs) -> dict:
    """Build a transcript mapping from (prompt, response) pairs."""
    return {prompt_hash(p): r for p, r in pairs}


def write_transcript(path, pairs) -> None:
    Path(path).write_text(
        json.dumps({"exchanges": [{"prompt": p, "response": r} for p, r in pairs]}, indent=1),
        encoding="utf-8",
    )


# --- gateway ----------------------------------------------------------------


@dataclass
class Gateway:
    transport: object
    prices: PriceTable = field(default_factory=PriceTable)
    retries: int = DEFAULT_RETRIES
    backoff_base: float = DEFAULT_BACKOFF_BASE
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)

    def __post_init__(self):
        self.ledger = Ledger(self.prices)
        self._semaphores: dict = {}
        self._sem_lock = threading.Lock()

    def _semaphore(self, model_id: str) -> threading.BoundedSemaphore:
        with self._sem_lock:
            if model_id not in self._semaphores:
                self._semaphores[model_id] = threading.BoundedSemaphore(self.max_concurrency)
            return self._semaphores[model_id]

    def complete(self, model: ModelSpec, prompt: str) -> ChatExchange:
        """One chat turn; retries transient failures with jittered backoff."""
        failures = 0
        with self._semaphore(model.model_id):
            while True:
                start = time.monotonic()
                try:
                    text, ptok, ctok = self.transport.send(model, prompt)
                    break
                except _RetryableFailure as exc:
                    failures += 1
                    if failures >= self.retries:
                        raise TransientProviderError(
                            f"{model.model_id}: still failing after {failures} attempts: {exc}"
                        ) from exc
                    delay = self.backoff_base * (2 ** (failures - 1)) * (1 + self.rng.random())
                    logger.info(
                        "%s: transient failure (%s); retry %d/%d in %.1fs",
                        model.model_id, exc, failures, self.retries - 1, delay,
                    )
                    self.sleep(delay)
        latency_ms = int((time.monotonic() - start) * 1000)
        exchange = ChatExchange(
            prompt=prompt,
            response=text,
            prompt_tokens=ptok,
            completion_tokens=ctok,
            latency_ms=latency_ms,
            cost_usd=self.prices.cost(model.model_id, ptok, ctok),
        )
        self.ledger.record(model.model_id, exchange, retries=failures)
        return exchange

    def ledger_report(self) -> dict:
        return self.ledger.report()
