"""Kernel backend selection: the compiled extension when it imports, the
pure-Python twin otherwise.  NEWSBENCH_PURE_KERNELS=1 forces the fallback
(used by the benchmark and backend-parity tests)."""

import os

from . import _bm25_py

if os.environ.get("NEWSBENCH_PURE_KERNELS") == "1":
    _impl = _bm25_py
else:
    try:
        from . import _bm25_c as _impl
    except ImportError:
        _impl = _bm25_py

BACKEND = _impl.BACKEND
score_query = _impl.score_query
