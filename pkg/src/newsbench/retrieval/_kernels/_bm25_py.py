"""Pure-Python BM25 scoring kernel; arithmetic mirrors the compiled kernel
operation-for-operation so both backends produce bit-identical scores."""

import numpy as np

BACKEND = "python"


def score_query(doc_norms, offsets, ords, tfs, idfs, k1):
    """Accumulate per-document scores for one query.

    doc_norms[d] holds k1*(1 - b + b*len_d/avg_len); per (term, doc) posting
    the contribution is idf * tf*(k1+1) / (tf + doc_norms[d]), summed in
    query-term order, then posting order.
    """
    n_docs = doc_norms.shape[0]
    scores = [0.0] * n_docs
    norms = doc_norms.tolist()
    offs = offsets.tolist()
    ord_list = ords.tolist()
    tf_list = tfs.tolist()
    idf_list = idfs.tolist()
    k1p1 = k1 + 1.0
    for t in range(len(idf_list)):
        idf = idf_list[t]
        for j in range(offs[t], offs[t + 1]):
            d = ord_list[j]
            tf = tf_list[j]
            scores[d] += idf * (tf * k1p1) / (tf + norms[d])
    return np.asarray(scores, dtype=np.float64)
