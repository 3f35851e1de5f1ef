"""Build hook: compile the BM25 scoring kernel when Cython and a C compiler
are available, otherwise install with the pure-Python kernel only.  The
package selects whichever backend imports cleanly at runtime."""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/newsbench/retrieval/_kernels/_bm25_c.pyx"],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build host
    print(f"newsbench: building without compiled kernel ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
