"""Ranked result lists shared by the lexical and dense retrievers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple  # ((article_id, score), ...) best first
    k: int

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "k": self.k,
            "entries": [[doc_id, score] for doc_id, score in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RankedList":
        return cls(
            query_id=d["query_id"],
            entries=tuple((e[0], float(e[1])) for e in d["entries"]),
            k=d["k"],
        )


def rank_top_k(scored, k: int, query_id: str) -> RankedList:
    """Sort (article_id, score) pairs: score descending, ties by article_id
    ascending, truncated to k."""
    ordered = sorted(scored, key=lambda e: (-e[1], e[0]))
    return RankedList(query_id=query_id, entries=tuple(ordered[:k]), k=k)
