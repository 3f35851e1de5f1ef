"""Okapi BM25 over an inverted index, one document per article (title plus
body).  Scoring runs through the kernel backend selected at import; the
naive full-scan oracle used in tests lives with the tests, not here.

Scoring definition (documented for the oracle to mirror):
  idf(t)      = max(0, ln(1 + (N - df + 0.5) / (df + 0.5)))
  tf part     = tf*(k1+1) / (tf + k1*(1 - b + b*len_d/avg_len))
  score(q, d) = sum over query term occurrences (duplicates count twice)
Documents matching no query term are excluded from the ranked list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..corpus_store import CorpusSlice
from ..errors import EmptyCorpusError, IndexBuildError
from ..io_utils import atomic_write_text
from . import _kernels
from .ranking import RankedList, rank_top_k
from .tokenizer import tokenize

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

INDEX_FORMAT = "bm25-index@1"


def doc_text(title: str, body: str) -> str:
    return f"{title}\n{body}"


@dataclass
class Bm25Index:
    doc_ids: list
    postings: dict  # term -> (ordinals int32 asc, term freqs float64)
    doc_lengths: np.ndarray
    avg_doc_length: float
    k1: float
    b: float
    doc_norms: np.ndarray  # k1*(1 - b + b*len/avg_len), precomputed

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        posting = self.postings.get(term)
        if posting is None:
            return 0.0
        df = posting[0].shape[0]
        return max(0.0, math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5)))


def build_bm25(corpus: CorpusSlice, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    if not corpus.articles:
        raise EmptyCorpusError("cannot build an index over an empty corpus slice")
    if not (k1 > 0):
        raise IndexBuildError("k1 must be positive")
    if not (0 <= b <= 1):
        raise IndexBuildError("b must be within [0, 1]")
    ids = [a.id for a in corpus.articles]
    if len(set(ids)) != len(ids):
        raise IndexBuildError("duplicate article ids in corpus slice")

    doc_lengths = np.zeros(len(ids), dtype=np.int64)
    term_postings: dict = {}
    for ordinal, article in enumerate(corpus.articles):
        terms = tokenize(doc_text(article.title, article.body))
        doc_lengths[ordinal] = len(terms)
        counts: dict = {}
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
        for term, tf in counts.items():
            term_postings.setdefault(term, []).append((ordinal, tf))

    avg_len = float(doc_lengths.mean())
    postings = {
        term: (
            np.array([p[0] for p in plist], dtype=np.int32),
            np.array([float(p[1]) for p in plist], dtype=np.float64),
        )
        for term, plist in term_postings.items()  # ordinals ascend by construction
    }
    if avg_len > 0:
        norms = k1 * (1.0 - b + b * doc_lengths.astype(np.float64) / avg_len)
    else:
        norms = np.full(len(ids), k1, dtype=np.float64)
    return Bm25Index(
        doc_ids=ids,
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg_len,
        k1=k1,
        b=b,
        doc_norms=norms,
    )


def query_bm25(index: Bm25Index, query: str, k: int, query_id: str = "") -> RankedList:
    """Top-k articles for the query; zero-score (non-matching) docs excluded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = tokenize(query)
    matched = [t for t in terms if t in index.postings]
    if not matched:
        return RankedList(query_id=query_id, entries=(), k=k)

    sizes = [index.postings[t][0].shape[0] for t in matched]
    offsets = np.zeros(len(matched) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    ords = np.concatenate([index.postings[t][0] for t in matched])
    tfs = np.concatenate([index.postings[t][1] for t in matched])
    idfs = np.array([index.idf(t) for t in matched], dtype=np.float64)

    scores = _kernels.score_query(index.doc_norms, offsets, ords, tfs, idfs, index.k1)
    hit = np.flatnonzero(scores > 0.0)
    scored = [(index.doc_ids[i], float(scores[i])) for i in hit]
    return rank_top_k(scored, k, query_id)


def save_index(index: Bm25Index, path) -> None:
    payload = {
        "format": INDEX_FORMAT,
        "k1": index.k1,
        "b": index.b,
        "doc_ids": index.doc_ids,
        "doc_lengths": index.doc_lengths.tolist(),
        "postings": {
            term: [[int(o), float(tf)] for o, tf in zip(ords, tfs)]
            for term, (ords, tfs) in sorted(index.postings.items())
        },
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def load_index(path) -> Bm25Index:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != INDEX_FORMAT:
        raise IndexBuildError(f"unsupported index format {payload.get('format')!r}")
    doc_lengths = np.array(payload["doc_lengths"], dtype=np.int64)
    avg_len = float(doc_lengths.mean()) if doc_lengths.size else 0.0
    k1, b = float(payload["k1"]), float(payload["b"])
    postings = {
        term: (
            np.array([p[0] for p in plist], dtype=np.int32),
            np.array([p[1] for p in plist], dtype=np.float64),
        )
        for term, plist in payload["postings"].items()
    }
    if avg_len > 0:
        norms = k1 * (1.0 - b + b * doc_lengths.astype(np.float64) / avg_len)
    else:
        norms = np.full(len(payload["doc_ids"]), k1, dtype=np.float64)
    return Bm25Index(
        doc_ids=payload["doc_ids"],
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg_len,
        k1=k1,
        b=b,
        doc_norms=norms,
    )
