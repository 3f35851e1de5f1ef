"""Retrieval stack: tokenizer, BM25 inverted index (kernel-backed), dense
flat search against the embedding sidecar, and hit@k / MRR scoring."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .bm25 import Bm25Index, build_bm25, load_index, query_bm25, save_index
from .dense import DenseIndex, EmbedClient, build_dense, query_dense
from .metrics import RetrievalMetrics, score_retrieval
from .ranking import RankedList, rank_top_k
from .tokenizer import tokenize

__all__ = [
    "KERNEL_BACKEND",
    "Bm25Index",
    "build_bm25",
    "query_bm25",
    "save_index",
    "load_index",
    "DenseIndex",
    "EmbedClient",
    "build_dense",
    "query_dense",
    "RetrievalMetrics",
    "score_retrieval",
    "RankedList",
    "rank_top_k",
    "tokenize",
]
