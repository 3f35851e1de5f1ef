# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled BM25 scoring kernel; see _bm25_py.py for the reference loop."""

import numpy as np

BACKEND = "cython"


def score_query(double[::1] doc_norms, long long[::1] offsets, int[::1] ords,
                double[::1] tfs, double[::1] idfs, double k1):
    cdef Py_ssize_t n_docs = doc_norms.shape[0]
    cdef Py_ssize_t n_terms = idfs.shape[0]
    scores_arr = np.zeros(n_docs, dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef double k1p1 = k1 + 1.0
    cdef double idf, tf
    cdef Py_ssize_t t, j, d
    for t in range(n_terms):
        idf = idfs[t]
        for j in range(offsets[t], offsets[t + 1]):
            d = ords[j]
            tf = tfs[j]
            scores[d] += idf * (tf * k1p1) / (tf + doc_norms[d])
    return scores_arr
