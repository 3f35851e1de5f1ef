"""Dataset identity and packaging.

Every released dataset carries a signature string encoding the generating
model, its decoding parameters, the generation timestamp, and an MD5 nonce:

    OKB<scheme>+m=<model>+t=<temperature>+p=<top_p>+d=<iso8601Z>+h=<32 hex>[+key=value...]

Extra parameters render in sorted key order so the string is canonical.  A
snapshot directory (named by the signature unless overridden) holds:

    signature.txt  items.jsonl  open_ended.jsonl  articles.jsonl  stats.json

All files use canonical JSON so two writes of the same snapshot are
byte-identical.  The MD5 nonce is an identifier, not a security primitive.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import PackagingError, SignatureParseError
from .feed_ingest import Article
from .io_utils import atomic_write_text, canonical_json, read_jsonl, write_jsonl
from .llm_gateway import ModelSpec
from .qa_factory import McqItem, OpenEndedItem

logger = logging.getLogger(__name__)

SCHEME_VERSION = 1

_NONCE_RE = re.compile(r"^[0-9a-f]{32}$")
_HEAD_RE = re.compile(r"^OKB(\d+)$")
_KEY_RE = re.compile(r"^[a-z0-9_-]+$")
_RESERVED_KEYS = {"m", "t", "p", "d", "h"}
_DATE_FMT = "%Y-%m-%dT%H:%M:%SZ"

SNAPSHOT_FILES = ("signature.txt", "items.jsonl", "open_ended.jsonl", "articles.jsonl", "stats.json")


@dataclass(frozen=True)
class Signature:
    scheme_version: int
    model_id: str
    temperature: float
    top_p: float
    generated_at: datetime
    nonce_md5: str
    extra_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not _NONCE_RE.match(self.nonce_md5):
            raise ValueError("nonce_md5 must be 32 lowercase hex chars")
        if self.generated_at.tzinfo is None:
            raise ValueError("generated_at must be timezone-aware")
        object.__setattr__(
            self, "generated_at", self.generated_at.astimezone(timezone.utc).replace(microsecond=0)
        )
        if "+" in self.model_id or not self.model_id:
            raise ValueError("model_id must be non-empty and free of '+'")
        if not (0 <= self.temperature <= 100):
            raise ValueError("temperature outside renderable range [0, 100]")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        for k, v in self.extra_params.items():
            if not _KEY_RE.match(k) or k in _RESERVED_KEYS:
                raise ValueError(f"invalid extra param key {k!r}")
            if "+" in str(v):
                raise ValueError(f"extra param {k!r} value contains '+'")

    def __eq__(self, other):
        if not isinstance(other, Signature):
            return NotImplemented
        return (
            self.scheme_version == other.scheme_version
            and self.model_id == other.model_id
            and self.temperature == other.temperature
            and self.top_p == other.top_p
            and self.generated_at == other.generated_at
            and self.nonce_md5 == other.nonce_md5
            and dict(self.extra_params) == dict(other.extra_params)
        )

    __hash__ = None


def mint_signature(
    model: ModelSpec,
    generated_at: datetime,
    extra_params: Optional[dict] = None,
    rng: Optional[random.Random] = None,
) -> Signature:
    """Mint the version identifier for a dataset build.

    The nonce is MD5 over a 128-bit random draw concatenated with the
    generation timestamp, so a seeded rng plus a fixed clock reproduces the
    signature exactly while live mints stay unique.
    """
    rng = rng or random.Random()
    stamp = generated_at.astimezone(timezone.utc).replace(microsecond=0)
    draw = rng.getrandbits(128).to_bytes(16, "big")
    nonce = hashlib.md5(draw + stamp.strftime(_DATE_FMT).encode("ascii")).hexdigest()
    extras = {"max_tokens": str(model.max_tokens)}
    extras.update(extra_params or {})
    return Signature(
        scheme_version=SCHEME_VERSION,
        model_id=model.model_id,
        temperature=model.temperature,
        top_p=model.top_p,
        generated_at=stamp,
        nonce_md5=nonce,
        extra_params=extras,
    )


def render(sig: Signature) -> str:
    parts = [
        f"OKB{sig.scheme_version}",
        f"m={sig.model_id}",
        f"t={sig.temperature}",
        f"p={sig.top_p}",
        f"d={sig.generated_at.strftime(_DATE_FMT)}",
        f"h={sig.nonce_md5}",
    ]
    parts.extend(f"{k}={sig.extra_params[k]}" for k in sorted(sig.extra_params))
    return "+".join(parts)


def parse(text: str) -> Signature:
    segments = text.strip().split("+")
    if len(segments) < 6:
        raise SignatureParseError(f"expected at least 6 '+'-separated segments, got {len(segments)}")
    head = _HEAD_RE.match(segments[0])
    if not head:
        raise SignatureParseError(f"bad scheme segment {segments[0]!r} (expected OKB<n>)")
    fields = {}
    extras = {}
    expected = ["m", "t", "p", "d", "h"]
    for i, segment in enumerate(segments[1:], start=1):
        if "=" not in segment:
            raise SignatureParseError(f"segment {segment!r} is not key=value")
        key, value = segment.split("=", 1)
        if i <= 5:
            if key != expected[i - 1]:
                raise SignatureParseError(f"segment {segment!r}: expected key {expected[i - 1]!r}")
            fields[key] = value
        else:
            if key in _RESERVED_KEYS or not _KEY_RE.match(key):
                raise SignatureParseError(f"bad extra param segment {segment!r}")
            if key in extras:
                raise SignatureParseError(f"duplicate extra param {key!r}")
            extras[key] = value
    if not _NONCE_RE.match(fields["h"]):
        raise SignatureParseError(f"bad nonce segment h={fields['h']!r} (expected 32 lowercase hex)")
    try:
        temperature = float(fields["t"])
    except ValueError as exc:
        raise SignatureParseError(f"bad temperature segment t={fields['t']!r}") from exc
    try:
        top_p = float(fields["p"])
    except ValueError as exc:
        raise SignatureParseError(f"bad top_p segment p={fields['p']!r}") from exc
    try:
        generated_at = datetime.strptime(fields["d"], _DATE_FMT).replace(tzinfo=timezone.utc)
    except ValueError as exc:
        raise SignatureParseError(f"bad date segment d={fields['d']!r}: {exc}") from exc
    try:
        return Signature(
            scheme_version=int(head.group(1)),
            model_id=fields["m"],
            temperature=temperature,
            top_p=top_p,
            generated_at=generated_at,
            nonce_md5=fields["h"],
            extra_params=extras,
        )
    except ValueError as exc:
        raise SignatureParseError(str(exc)) from exc


# --- snapshots ----------------------------------------------------------------


@dataclass
class DatasetSnapshot:
    signature: Signature
    items: list
    open_ended: list
    articles: list
    stats: dict

    @property
    def article_index(self) -> dict:
        return {a.id: a.source_url for a in self.articles}

    def articles_by_id(self) -> dict:
        return {a.id: a for a in self.articles}


def package(
    items: list,
    open_ended: list,
    articles: list,
    sig: Signature,
    items_generated: Optional[int] = None,
    articles_in: Optional[int] = None,
) -> DatasetSnapshot:
    """Bundle validated items with their source articles under a signature."""
    known = {a.id for a in articles}
    if len(known) != len(articles):
        raise PackagingError("duplicate article ids in snapshot")
    for item in items:
        if item.article_id not in known:
            raise PackagingError(f"item {item.item_id} references unknown article {item.article_id}")
    for oe in open_ended:
        if oe.article_id not in known:
            raise PackagingError(f"open-ended item references unknown article {oe.article_id}")
    if not items:
        logger.warning("packaging an empty snapshot (no kept items)")
    stats = {
        "articles_in": len(articles) if articles_in is None else articles_in,
        "items_generated": len(items) if items_generated is None else items_generated,
        "items_kept": len(items),
        "open_ended": len(open_ended),
    }
    if stats["items_kept"] > stats["items_generated"]:
        raise PackagingError("items_kept exceeds items_generated")
    return DatasetSnapshot(signature=sig, items=items, open_ended=open_ended, articles=articles, stats=stats)


def write_snapshot(snapshot: DatasetSnapshot, root, dirname: Optional[str] = None) -> Path:
    """Write the snapshot directory; every file is canonical and atomically
    replaced, so rewriting the same snapshot is byte-identical."""
    out = Path(root) / (dirname or render(snapshot.signature))
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "signature.txt", render(snapshot.signature) + "\n")
    write_jsonl(out / "items.jsonl", (i.to_dict() for i in snapshot.items))
    write_jsonl(out / "open_ended.jsonl", (o.to_dict() for o in snapshot.open_ended))
    write_jsonl(out / "articles.jsonl", (a.to_dict() for a in snapshot.articles))
    atomic_write_text(out / "stats.json", canonical_json(snapshot.stats) + "\n")
    return out


def read_snapshot(path) -> DatasetSnapshot:
    path = Path(path)
    sig = parse((path / "signature.txt").read_text(encoding="utf-8").strip())
    items = [McqItem.from_dict(d) for d in read_jsonl(path / "items.jsonl")]
    open_ended = [OpenEndedItem.from_dict(d) for d in read_jsonl(path / "open_ended.jsonl")]
    articles = [Article.from_dict(d) for d in read_jsonl(path / "articles.jsonl")]
    stats = json.loads((path / "stats.json").read_text(encoding="utf-8"))
    snapshot = DatasetSnapshot(
        signature=sig, items=items, open_ended=open_ended, articles=articles, stats=stats
    )
    _check_consistency(snapshot)
    return snapshot


def _check_consistency(snapshot: DatasetSnapshot) -> None:
    stats = snapshot.stats
    if stats.get("items_kept") != len(snapshot.items):
        raise PackagingError("stats.items_kept disagrees with items.jsonl")
    if stats.get("open_ended") != len(snapshot.open_ended):
        raise PackagingError("stats.open_ended disagrees with open_ended.jsonl")
    index = snapshot.article_index
    for item in snapshot.items:
        if item.article_id not in index:
            raise PackagingError(f"item {item.item_id} references unknown article {item.article_id}")
