"""Answer-span normalization shared by the open-ended judge and the
span-derivation step, so both sides agree on what "matches" means."""

from __future__ import annotations

import string
import unicodedata


def _is_punct(ch: str) -> bool:
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def normalize_answer(text: str) -> str:
    """Casefold, drop punctuation (ASCII symbols and Unicode punctuation
    alike, so quotes, commas and currency signs vanish), collapse whitespace."""
    folded = text.casefold()
    cleaned = "".join(" " if ch.isspace() else ch for ch in folded if not _is_punct(ch))
    return " ".join(cleaned.split())


def span_token_count(text: str) -> int:
    """Whitespace tokens after trimming surrounding punctuation."""
    tokens = (t.strip(string.punctuation) for t in text.split())
    return sum(1 for t in tokens if t)


def contains_span(body: str, span: str) -> bool:
    """True when the normalized span occurs on token boundaries in the body."""
    norm_body = normalize_answer(body)
    norm_span = normalize_answer(span)
    if not norm_span:
        return False
    return f" {norm_span} " in f" {norm_body} "
