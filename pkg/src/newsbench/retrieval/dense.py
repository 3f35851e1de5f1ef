"""Dense retrieval over vectors served by the embedding sidecar.

Two modes, both exhaustive (flat) scans with the same ordering rules as the
lexical path:

  single  one vector per document/query, cosine via unit-normalized dot
  late    token-level vectors; score(q, d) = sum over query tokens of the
          max dot product against any document token

The sidecar is the only vector source; if it is unreachable the dense path
raises dense-unavailable and BM25 keeps working.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests

from ..corpus_store import CorpusSlice
from ..errors import DenseUnavailableError, EmbedProtocolError, IndexBuildError
from .bm25 import doc_text
from .ranking import RankedList, rank_top_k

MODE_SINGLE = "single"
MODE_LATE = "late"


class EmbedClient:
    """Thin HTTP client for the embedding sidecar wire protocol."""

    def __init__(self, base_url: str, timeout: float = 60.0, batch_size: int = 16):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.batch_size = batch_size

    def health(self) -> dict:
        try:
            resp = requests.get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise DenseUnavailableError(f"sidecar unreachable at {self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise DenseUnavailableError(f"sidecar health returned HTTP {resp.status_code}")
        return resp.json()

    def embed(self, texts: list, mode: str) -> list:
        """Returns one vector per text (single) or one list of token vectors
        per text (tokens); validates dimension consistency and finiteness."""
        wire_mode = "tokens" if mode == MODE_LATE else "single"
        out: list = []
        dim: Optional[int] = None
        for start in range(0, len(texts), self.batch_size):
            batch = texts[start : start + self.batch_size]
            payload = self._post({"mode": wire_mode, "texts": batch})
            if not isinstance(payload.get("dim"), int):
                raise EmbedProtocolError("sidecar reply missing integer 'dim'")
            if dim is None:
                dim = payload["dim"]
            elif payload["dim"] != dim:
                raise EmbedProtocolError(f"sidecar dim changed mid-request: {dim} then {payload['dim']}")
            embeddings = payload.get("embeddings")
            if not isinstance(embeddings, list) or len(embeddings) != len(batch):
                raise EmbedProtocolError("sidecar reply arity does not match request")
            for entry in embeddings:
                out.append(self._validate_entry(entry, wire_mode, dim))
        return out

    def _post(self, body: dict) -> dict:
        try:
            resp = requests.post(f"{self.base_url}/embed", json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise DenseUnavailableError(f"sidecar unreachable at {self.base_url}: {exc}") from exc
        if resp.status_code >= 500:
            raise DenseUnavailableError(f"sidecar returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise EmbedProtocolError(f"sidecar rejected request: HTTP {resp.status_code}: {resp.text[:300]}")
        return resp.json()

    @staticmethod
    def _validate_entry(entry, wire_mode: str, dim: int) -> np.ndarray:
        arr = np.asarray(entry, dtype=np.float64)
        if wire_mode == "single":
            if arr.ndim != 1 or arr.shape[0] != dim:
                raise EmbedProtocolError(f"expected one {dim}-d vector, got shape {arr.shape}")
        else:
            if arr.ndim != 2 or arr.shape[1] != dim or arr.shape[0] < 1:
                raise EmbedProtocolError(f"expected token vectors of dim {dim}, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise EmbedProtocolError("sidecar reply contains non-finite values")
        return arr


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


@dataclass
class DenseIndex:
    mode: str
    doc_ids: list
    dim: int
    vectors: Optional[np.ndarray] = None  # single: [N, D], unit rows
    token_vectors: Optional[list] = None  # late: per doc [T_i, D], unit rows

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)


def build_dense(corpus: CorpusSlice, client: EmbedClient, mode: str = MODE_SINGLE) -> DenseIndex:
    if mode not in (MODE_SINGLE, MODE_LATE):
        raise ValueError(f"unknown dense mode {mode!r}")
    if not corpus.articles:
        raise IndexBuildError("cannot build a dense index over an empty corpus slice")
    ids = [a.id for a in corpus.articles]
    if len(set(ids)) != len(ids):
        raise IndexBuildError("duplicate article ids in corpus slice")
    texts = [doc_text(a.title, a.body) for a in corpus.articles]
    embedded = client.embed(texts, mode)
    dim = int(embedded[0].shape[-1])
    if mode == MODE_SINGLE:
        matrix = normalize_rows(np.stack(embedded).astype(np.float64))
        return DenseIndex(mode=mode, doc_ids=ids, dim=dim, vectors=matrix)
    token_vectors = [normalize_rows(m) for m in embedded]
    return DenseIndex(mode=mode, doc_ids=ids, dim=dim, token_vectors=token_vectors)


def score_single(index: DenseIndex, query_vec: np.ndarray) -> np.ndarray:
    q = query_vec / (np.linalg.norm(query_vec) or 1.0)
    return index.vectors @ q


def score_late(index: DenseIndex, query_tokens: np.ndarray) -> np.ndarray:
    """Late interaction: per query token take the best-matching doc token."""
    q = normalize_rows(query_tokens)
    scores = np.empty(index.n_docs, dtype=np.float64)
    for i, doc in enumerate(index.token_vectors):
        sims = q @ doc.T  # [Tq, Td]
        scores[i] = float(sims.max(axis=1).sum())
    return scores


def query_dense(index: DenseIndex, query: str, k: int, client: EmbedClient, query_id: str = "") -> RankedList:
    if k < 1:
        raise ValueError("k must be >= 1")
    embedded = client.embed([query], index.mode)[0]
    if embedded.shape[-1] != index.dim:
        raise EmbedProtocolError(
            f"query embedding dim {embedded.shape[-1]} != index dim {index.dim}"
        )
    if index.mode == MODE_SINGLE:
        scores = score_single(index, embedded)
    else:
        scores = score_late(index, embedded)
    scored = [(doc_id, float(s)) for doc_id, s in zip(index.doc_ids, scores)]
    return rank_top_k(scored, k, query_id)
