"""Backend selection for the hot loops.

The compiled extension ``compvq._kernels`` is used when it imports; otherwise
(or when ``COMPVQ_PURE_PYTHON=1`` is set) the numpy twin in
``compvq._kernels_py`` is used. Both produce identical results.

The wrappers here turn float32 codebooks into the float64 dot-product tables
the kernels consume and process vectors in bounded-memory chunks.
"""

import os

import numpy as np

from . import _kernels_py

_impl = None
if os.environ.get("COMPVQ_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = None

BACKEND = "python" if _impl is None else "compiled"
if _impl is None:
    _impl = _kernels_py

CHUNK = 8192


def get_backend(name=None):
    """Kernel module for ``name`` ('compiled' or 'python'); active one if None."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


class DotTables:
    """Codeword norms and pairwise codeword inner products of a full stack."""

    def __init__(self, books):
        books = np.asarray(books, dtype=np.float64)
        self.m, self.h, self.d = books.shape
        self.flat = np.ascontiguousarray(books.reshape(self.m * self.h, self.d))
        self.cross = np.ascontiguousarray(self.flat @ self.flat.T)
        self.cnorm = np.einsum("ij,ij->i", self.flat, self.flat)

    def update_book(self, i, book):
        """Refresh the tables after book ``i`` changed."""
        h = self.h
        self.flat[i * h:(i + 1) * h] = book
        blk = self.flat @ self.flat[i * h:(i + 1) * h].T
        self.cross[:, i * h:(i + 1) * h] = blk
        self.cross[i * h:(i + 1) * h, :] = blk.T
        self.cnorm[i * h:(i + 1) * h] = np.einsum("ij,ij->i", book, book)

    def project(self, Y):
        """Inner products of rows of Y with every codeword, (n, m*h)."""
        return np.ascontiguousarray(Y @ self.flat.T)


def greedy_codes(Y, tables, codes=None, start=0, nthreads=1, backend=None, xc=None):
    """Greedy residual encoding of float64 rows ``Y`` against ``tables``.

    Books ``< start`` keep the indices already in ``codes``; returns a new array.
    ``xc`` may supply precomputed ``tables.project(Y)``.
    """
    impl = get_backend(backend)
    n = Y.shape[0]
    out = np.zeros((n, tables.m), dtype=np.uint8) if codes is None else np.array(codes, dtype=np.uint8, order="C")
    for lo in range(0, n, CHUNK):
        hi = min(n, lo + CHUNK)
        block_xc = tables.project(Y[lo:hi]) if xc is None else np.ascontiguousarray(xc[lo:hi])
        block = np.ascontiguousarray(out[lo:hi])
        impl.greedy_encode(block_xc, tables.cross, tables.cnorm, block, tables.m, tables.h, start, nthreads)
        out[lo:hi] = block
    return out


def beam_codes(Y, tables, beam, nthreads=1, backend=None):
    """Beam-search encoding of float64 rows ``Y``; returns (codes, scores)."""
    impl = get_backend(backend)
    n = Y.shape[0]
    codes = np.zeros((n, tables.m), dtype=np.uint8)
    scores = np.zeros(n)
    for lo in range(0, n, CHUNK):
        hi = min(n, lo + CHUNK)
        xc = tables.project(Y[lo:hi])
        xn = np.einsum("ij,ij->i", Y[lo:hi], Y[lo:hi])
        c = np.zeros((hi - lo, tables.m), dtype=np.uint8)
        s = np.zeros(hi - lo)
        impl.beam_encode(xc, xn, tables.cross, tables.cnorm, c, s, tables.m, tables.h, int(beam), nthreads)
        codes[lo:hi] = c
        scores[lo:hi] = s
    return codes, scores


def adc_scores(tables, codes, norms=None, backend=None):
    impl = get_backend(backend)
    tables = np.ascontiguousarray(tables, dtype=np.float64)
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if norms is not None:
        norms = np.ascontiguousarray(norms, dtype=np.float64)
    return impl.adc_scan(tables, codes, norms)
