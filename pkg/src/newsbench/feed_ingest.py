"""RSS ingestion: registry loading, feed fetching/parsing, windowed harvest.

Articles are normalized to plain text with UTC timestamps and get a stable
content-derived id so repeated harvests deduplicate cleanly.  A fixture
transport (directory of saved feed XML) stands in for HTTP in offline runs.
"""

from __future__ import annotations

import hashlib
import logging
import re
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from email.utils import parsedate_to_datetime
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Optional
from urllib.parse import parse_qsl, urlencode, urlparse, urlunparse

import requests
import yaml

from .errors import (
    DuplicateSourceError,
    FeedParseError,
    HarvestEmptyError,
    RegistryFormatError,
    TransientFetchError,
)

logger = logging.getLogger(__name__)

CATEGORIES = (
    "general",
    "international",
    "political",
    "tech-science",
    "business",
    "lifestyle",
    "open-source",
)

DEFAULT_USER_AGENT = "newsbench/0.1 (+rss harvester)"
DEFAULT_TIMEOUT = 20.0
DEFAULT_MAX_PARALLEL = 8
MIN_BODY_CHARS = 200

# Query parameters that vary per syndication channel but do not identify
# content; stripped before hashing/deduplication.
_TRACKING_EXACT = {
    "fbclid",
    "gclid",
    "igshid",
    "mc_cid",
    "mc_eid",
    "ocid",
    "at_medium",
    "at_campaign",
    "cmpid",
}
_TRACKING_PREFIX = ("utm_",)


@dataclass(frozen=True)
class SourceSpec:
    """One feed in the source registry."""

    name: str
    category: str
    feed_url: str
    enabled: bool = True


@dataclass(frozen=True)
class Article:
    """A normalized, timestamped news document."""

    id: str
    title: str
    published_at: datetime
    author: Optional[str]
    body: str
    source_url: str
    source_name: str
    category: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "published_at": self.published_at.isoformat(),
            "author": self.author,
            "body": self.body,
            "source_url": self.source_url,
            "source_name": self.source_name,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Article":
        return cls(
            id=d["id"],
            title=d["title"],
            published_at=datetime.fromisoformat(d["published_at"]),
            author=d.get("author"),
            body=d["body"],
            source_url=d["source_url"],
            source_name=d["source_name"],
            category=d["category"],
        )


@dataclass
class FetchReport:
    """Per-source outcome of a harvest; surfaced instead of hidden logs."""

    source: str
    error: Optional[str] = None
    fetched: int = 0
    dropped: list = field(default_factory=list)  # (entry title, reason)


@dataclass
class HarvestResult:
    articles: list
    reports: list  # list of FetchReport

    @property
    def failures(self) -> dict:
        return {r.source: r.error for r in self.reports if r.error}


def canonical_url(url: str) -> str:
    """Strip fragments and tracking query params; lowercase scheme/host."""
    parts = urlparse(url)
    query = [
        (k, v)
        for k, v in parse_qsl(parts.query, keep_blank_values=True)
        if k not in _TRACKING_EXACT and not k.startswith(_TRACKING_PREFIX)
    ]
    return urlunparse(
        (
            parts.scheme.lower(),
            parts.netloc.lower(),
            parts.path,
            parts.params,
            urlencode(query),
            "",
        )
    )


def article_id(source_url: str, title: str, published_at: datetime) -> str:
    """128-bit content hash; stable across re-fetches of the same entry."""
    key = "\n".join(
        (canonical_url(source_url), title, published_at.astimezone(timezone.utc).isoformat())
    )
    return hashlib.md5(key.encode("utf-8")).hexdigest()


class _TextExtractor(HTMLParser):
    _SKIP = {"script", "style"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self._chunks: list = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth:
            self._skip_depth -= 1

    def handle_data(self, data):
        if not self._skip_depth:
            self._chunks.append(data)

    def text(self) -> str:
        return "".join(self._chunks)


def strip_markup(text: str) -> str:
    """Drop tags and script/style bodies, then collapse whitespace."""
    parser = _TextExtractor()
    parser.feed(text)
    parser.close()
    return re.sub(r"\s+", " ", parser.text()).strip()


def _is_valid_url(url: str) -> bool:
    parts = urlparse(url)
    return bool(parts.scheme in ("http", "https") and parts.netloc)


def load_registry(path) -> list:
    """Parse the YAML source registry into enabled SourceSpecs.

    Format: top-level mapping of category -> list of entries, each with
    ``name``, ``url`` and an optional ``enabled`` flag (default true).
    Order within the file is preserved.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f" at line {mark.line + 1}" if mark is not None else ""
        raise RegistryFormatError(f"{path}: invalid registry syntax{line}: {exc}") from exc
    if raw is None:
        return []
    if not isinstance(raw, dict):
        raise RegistryFormatError(f"{path}: registry root must be a mapping of categories")

    sources: list = []
    seen: set = set()
    for category, entries in raw.items():
        if category not in CATEGORIES:
            raise RegistryFormatError(
                f"{path}: unknown category {category!r} (expected one of {', '.join(CATEGORIES)})"
            )
        if entries is None:
            continue
        if not isinstance(entries, list):
            raise RegistryFormatError(f"{path}: category {category!r} must hold a list of sources")
        for entry in entries:
            if not isinstance(entry, dict) or "name" not in entry or "url" not in entry:
                raise RegistryFormatError(
                    f"{path}: each source under {category!r} needs 'name' and 'url' keys"
                )
            name = str(entry["name"])
            url = str(entry["url"])
            if name in seen:
                raise DuplicateSourceError(f"{path}: duplicate source name {name!r}")
            seen.add(name)
            if not _is_valid_url(url):
                raise RegistryFormatError(f"{path}: source {name!r} has invalid feed URL {url!r}")
            spec = SourceSpec(
                name=name,
                category=category,
                feed_url=url,
                enabled=bool(entry.get("enabled", True)),
            )
            if spec.enabled:
                sources.append(spec)
    return sources


# --- transports -------------------------------------------------------------

Transport = Callable[[str], bytes]


def http_transport(timeout: float = DEFAULT_TIMEOUT, user_agent: str = DEFAULT_USER_AGENT) -> Transport:
    def fetch(url: str) -> bytes:
        try:
            resp = requests.get(url, timeout=timeout, headers={"User-Agent": user_agent})
        except requests.RequestException as exc:
            raise TransientFetchError(f"GET {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransientFetchError(f"GET {url} returned HTTP {resp.status_code}")
        return resp.content

    return fetch


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def fixture_transport(directory) -> Transport:
    """Serve saved feed XML from ``<dir>/<slug(source name)>.xml``.

    The URL is mapped back to a source name via a sidecar lookup built by
    fetch_feed, so this transport keys on the URL string itself: files may
    also be named ``<slug(url host+path)>.xml``.
    """
    directory = Path(directory)

    def fetch(url: str) -> bytes:
        parts = urlparse(url)
        candidates = [
            directory / (slugify(parts.netloc + parts.path) + ".xml"),
            directory / (slugify(url) + ".xml"),
        ]
        for cand in candidates:
            if cand.exists():
                return cand.read_bytes()
        raise TransientFetchError(f"no fixture file for {url} under {directory}")

    return fetch


# --- feed parsing -----------------------------------------------------------

_ATOM_NS = "{http://www.w3.org/2005/Atom}"
_CONTENT_NS = "{http://purl.org/rss/1.0/modules/content/}"
_DC_NS = "{http://purl.org/dc/elements/1.1/}"


def _parse_date(value: str) -> Optional[datetime]:
    value = value.strip()
    if not value:
        return None
    try:
        dt = parsedate_to_datetime(value)
    except (TypeError, ValueError):
        dt = None
    if dt is None:
        try:
            dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)  # naive feed dates assumed UTC
    return dt.astimezone(timezone.utc)


def _first_text(elem, *tags) -> str:
    for tag in tags:
        node = elem.find(tag)
        if node is not None and node.text:
            return node.text
    return ""


def _iter_entries(root):
    if root.tag == "rss" or root.tag.endswith("rss"):
        channel = root.find("channel")
        if channel is None:
            return []
        return channel.findall("item")
    if root.tag == f"{_ATOM_NS}feed":
        return root.findall(f"{_ATOM_NS}entry")
    raise FeedParseError(f"unsupported feed root element {root.tag!r}")


def _entry_fields(entry) -> dict:
    if entry.tag == f"{_ATOM_NS}entry":
        link = ""
        for node in entry.findall(f"{_ATOM_NS}link"):
            if node.get("rel") in (None, "alternate"):
                link = node.get("href", "")
                break
        author = _first_text(entry, f"{_ATOM_NS}author/{_ATOM_NS}name")
        return {
            "title": _first_text(entry, f"{_ATOM_NS}title"),
            "link": link,
            "date": _first_text(entry, f"{_ATOM_NS}published", f"{_ATOM_NS}updated"),
            "author": author,
            "body": _first_text(entry, f"{_ATOM_NS}content", f"{_ATOM_NS}summary"),
        }
    return {
        "title": _first_text(entry, "title"),
        "link": _first_text(entry, "link", "guid"),
        "date": _first_text(entry, "pubDate", f"{_DC_NS}date"),
        "author": _first_text(entry, "author", f"{_DC_NS}creator"),
        "body": _first_text(entry, f"{_CONTENT_NS}encoded", "description"),
    }


def fetch_feed(
    source: SourceSpec,
    now: datetime,
    transport: Optional[Transport] = None,
    min_body_chars: int = MIN_BODY_CHARS,
    report: Optional[FetchReport] = None,
) -> list:
    """Fetch and normalize one feed into Articles.

    Entries without a parseable publication date, or whose stripped body is
    shorter than ``min_body_chars``, are dropped and recorded on the report.
    """
    transport = transport or http_transport()
    payload = transport(source.feed_url)
    try:
        root = ET.fromstring(payload)
    except ET.ParseError as exc:
        raise FeedParseError(f"{source.name}: malformed feed XML: {exc}") from exc

    articles: list = []
    for entry in _iter_entries(root):
        fields = _entry_fields(entry)
        title = strip_markup(fields["title"]) if fields["title"] else ""
        link = fields["link"].strip()
        published = _parse_date(fields["date"])
        if not title or not link:
            _drop(report, title or "<untitled>", "missing title or link")
            continue
        if published is None:
            _drop(report, title, "missing or unparseable publication date")
            continue
        if published > now:
            logger.warning("%s: entry %r dated in the future (%s)", source.name, title, published)
        body = strip_markup(fields["body"]) if fields["body"] else ""
        if len(body) < min_body_chars:
            _drop(report, title, f"body shorter than {min_body_chars} chars after stripping")
            continue
        author = strip_markup(fields["author"]).strip() or None if fields["author"] else None
        articles.append(
            Article(
                id=article_id(link, title, published),
                title=title,
                published_at=published,
                author=author,
                body=body,
                source_url=link,
                source_name=source.name,
                category=source.category,
            )
        )
    if report is not None:
        report.fetched = len(articles)
    return articles


def _drop(report: Optional[FetchReport], title: str, reason: str) -> None:
    logger.warning("dropped entry %r: %s", title, reason)
    if report is not None:
        report.dropped.append((title, reason))


def harvest(
    registry: list,
    window_end: datetime,
    window_hours: int,
    transport: Optional[Transport] = None,
    max_parallel: int = DEFAULT_MAX_PARALLEL,
    min_body_chars: int = MIN_BODY_CHARS,
) -> HarvestResult:
    """Fetch every registry source and keep articles published inside
    ``(window_end - window_hours, window_end]``, deduplicated by canonical
    source URL and sorted by published_at descending.
    """
    if window_hours <= 0:
        raise ValueError("window_hours must be positive")
    if not registry:
        raise HarvestEmptyError("registry has no enabled sources")

    window_start = window_end - timedelta(hours=window_hours)
    reports = [FetchReport(source=s.name) for s in registry]

    def run(idx_source):
        idx, source = idx_source
        try:
            return fetch_feed(
                source,
                now=window_end,
                transport=transport,
                min_body_chars=min_body_chars,
                report=reports[idx],
            )
        except (TransientFetchError, FeedParseError) as exc:
            reports[idx].error = str(exc)
            logger.warning("source %s skipped: %s", source.name, exc)
            return []

    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        per_source = list(pool.map(run, enumerate(registry)))

    if all(r.error for r in reports):
        raise HarvestEmptyError(
            "all sources failed: " + "; ".join(f"{r.source}: {r.error}" for r in reports)
        )

    by_key: dict = {}
    for articles in per_source:
        for art in articles:
            if not (window_start < art.published_at <= window_end):
                continue
            key = canonical_url(art.source_url)
            held = by_key.get(key)
            # syndicated duplicates: keep the most recent copy, then the
            # lexicographically smallest id so reruns are deterministic
            if (
                held is None
                or art.published_at > held.published_at
                or (art.published_at == held.published_at and art.id < held.id)
            ):
                by_key[key] = art
    merged = sorted(by_key.values(), key=lambda a: a.id)
    merged.sort(key=lambda a: a.published_at, reverse=True)
    return HarvestResult(articles=merged, reports=reports)
