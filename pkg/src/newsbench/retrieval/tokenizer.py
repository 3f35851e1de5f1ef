"""Lexical analyzer for BM25: lowercase, split on Unicode word boundaries,
no stemming, no stopwords.  Deterministic by construction."""

import re

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list:
    return _WORD_RE.findall(text.lower())
