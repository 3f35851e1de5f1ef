"""Retrieval scoring: hit@k (gold article anywhere in the top k) and MRR@k
(reciprocal rank when the gold article lands within the top k, else zero),
averaged over queries."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ScoringError
from .ranking import RankedList


@dataclass(frozen=True)
class RetrievalMetrics:
    hit_at_k: dict
    mrr_at_k: dict
    n_queries: int

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "hit_at_k": {str(k): v for k, v in self.hit_at_k.items()},
            "mrr_at_k": {str(k): v for k, v in self.mrr_at_k.items()},
        }


def gold_rank(run: RankedList, gold_id: str):
    """1-based rank of the gold article in the ranked list, or None."""
    for pos, (doc_id, _score) in enumerate(run.entries, start=1):
        if doc_id == gold_id:
            return pos
    return None


def score_retrieval(runs: list, gold: dict, ks: list) -> RetrievalMetrics:
    if not runs:
        raise ScoringError("no retrieval runs to score")
    ranks = []
    for run in runs:
        if run.query_id not in gold:
            raise ScoringError(f"no gold article for query {run.query_id!r}")
        ranks.append(gold_rank(run, gold[run.query_id]))

    n = len(ranks)
    hit_at_k = {}
    mrr_at_k = {}
    for k in ks:
        hits = sum(1 for r in ranks if r is not None and r <= k)
        rr = sum(1.0 / r for r in ranks if r is not None and r <= k)
        hit_at_k[k] = hits / n
        mrr_at_k[k] = rr / n
    return RetrievalMetrics(hit_at_k=hit_at_k, mrr_at_k=mrr_at_k, n_queries=n)
