#!/usr/bin/env python3
"""Compare the compiled and pure-Python BM25 scoring kernels on a synthetic
corpus and verify they agree bit-for-bit.

    python benchmarks/bench_bm25.py [--docs 5000] [--queries 200]
"""

import argparse
import random
import time


from newsbench.corpus_store import CorpusSlice
from newsbench.feed_ingest import Article, article_id
from newsbench.retrieval import _kernels
from newsbench.retrieval._kernels import _bm25_py
from newsbench.retrieval.bm25 import build_bm25, query_bm25

try:
    from newsbench.retrieval._kernels import _bm25_c
except ImportError:
    _bm25_c = None

from datetime import datetime, timezone


def synthetic_corpus(n_docs: int, vocab: int, rng: random.Random) -> CorpusSlice:
    words = [f"w{i}" for i in range(vocab)]
    weights = [1.0 / (i + 1) for i in range(vocab)]  # zipf-ish
    stamp = datetime(2025, 3, 22, 12, tzinfo=timezone.utc)
    articles = []
    for d in range(n_docs):
        body = " ".join(rng.choices(words, weights=weights, k=rng.randint(80, 400)))
        title = " ".join(rng.choices(words, weights=weights, k=6))
        url = f"https://bench.example/{d}"
        articles.append(
            Article(
                id=article_id(url, title, stamp),
                title=title,
                published_at=stamp,
                author=None,
                body=body,
                source_url=url,
                source_name="bench",
                category="general",
            )
        )
    return CorpusSlice(window_days=1, as_of=stamp, articles=articles)


def time_backend(impl, index, queries, k):
    _kernels.score_query = impl.score_query
    start = time.perf_counter()
    results = [query_bm25(index, q, k) for q in queries]
    return time.perf_counter() - start, results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--docs", type=int, default=5000)
    parser.add_argument("--vocab", type=int, default=8000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    print(f"building index over {args.docs} synthetic docs...")
    corpus = synthetic_corpus(args.docs, args.vocab, rng)
    index = build_bm25(corpus)
    words = [f"w{i}" for i in range(args.vocab)]
    queries = [
        " ".join(rng.choices(words, weights=[1.0 / (i + 1) for i in range(args.vocab)], k=rng.randint(3, 12)))
        for _ in range(args.queries)
    ]

    original = _kernels.score_query
    try:
        py_time, py_results = time_backend(_bm25_py, index, queries, args.k)
        print(f"pure python : {py_time:8.3f}s  ({args.queries / py_time:7.1f} q/s)")
        if _bm25_c is None:
            print("compiled    : not built (pip install -e . with Cython available)")
            return
        c_time, c_results = time_backend(_bm25_c, index, queries, args.k)
        print(f"cython      : {c_time:8.3f}s  ({args.queries / c_time:7.1f} q/s)")
        print(f"speedup     : {py_time / c_time:8.2f}x")
    finally:
        _kernels.score_query = original

    for a, b in zip(py_results, c_results):
        assert a.entries == b.entries, "backends disagree"
    print("backends agree on every ranked list (exact float equality)")


if __name__ == "__main__":
    main()
