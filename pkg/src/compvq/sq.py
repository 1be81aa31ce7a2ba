"""Stacked quantizers: hierarchical full-dimensional codebooks.

Codebook i is trained on what books 1..i-1 left over, vectors are encoded
greedily from the coarsest book to the finest, and the codebooks are refined
top-down with centroid updates followed by greedy re-encoding of the books
below the one just updated.
"""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .core import FULL, CodebookStack, Model, StructureError, as_codes, as_vectors, derive_seed
from .kernels import DotTables, greedy_codes
from .kmeans import KMeansConfig, cluster_means, kmeans_train

# cache X @ codewords^T during refinement when it has at most this many entries
XC_CACHE_ENTRIES = 1 << 26


class HierarchyWarning(UserWarning):
    """Codeword energy does not decay from coarse to fine books."""


@dataclass(frozen=True)
class SQConfig:
    m: int
    h: int = 256
    seed: int = 0
    kmeans_iters: int = 25
    kmeans_tol: float = 1e-5
    refine_iters: int = 100

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 1 <= self.h <= 256:
            raise ValueError("h must be in [1, 256]")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")

    def kmeans_config(self, stage):
        return KMeansConfig(k=self.h, iters=self.kmeans_iters,
                            seed=derive_seed(self.seed, stage), tol=self.kmeans_tol)


def _mse(Y, Y_hat):
    diff = Y - Y_hat
    return float(np.einsum("ij,ij->", diff, diff) / max(Y.shape[0], 1))


def _decode(books, codes, lo=0, base=None):
    out = np.zeros((codes.shape[0], books.shape[2])) if base is None else base.copy()
    for i in range(lo, books.shape[0]):
        out += books[i][codes[:, i]]
    return out


def book_energies(books):
    """Mean squared codeword norm of each book."""
    b = np.asarray(books, dtype=np.float64)
    return np.einsum("ijk,ijk->i", b, b) / b.shape[1]


def check_hierarchy(books):
    energies = book_energies(books)
    rising = [i for i in range(1, len(energies)) if energies[i] > energies[i - 1]]
    if rising:
        warnings.warn(f"codeword energy increases at books {rising}: {energies.tolist()}",
                      HierarchyWarning, stacklevel=3)
    return not rising


def sq_init(X, cfg):
    """Residual k-means initialization; returns (model, codes)."""
    X = as_vectors(X)
    n, d = X.shape
    if n < cfg.h:
        raise StructureError(f"cannot seed h={cfg.h} centers from n={n} vectors")
    t0 = time.perf_counter()
    resid = X.astype(np.float64)
    scale = float(np.einsum("ij,ij->", resid, resid)) / n
    books = np.empty((cfg.m, cfg.h, d), dtype=np.float32)
    codes = np.empty((n, cfg.m), dtype=np.uint8)
    stage_errors = []
    degenerate = []
    for i in range(cfg.m):
        if float(np.einsum("ij,ij->", resid, resid)) / n <= 1e-24 * max(scale, 1e-300):
            degenerate.append(i)
        res = kmeans_train(resid, cfg.kmeans_config(i))
        books[i] = res.centroids
        codes[:, i] = res.assignments
        resid -= books[i][res.assignments]
        stage_errors.append(float(np.einsum("ij,ij->", resid, resid)) / n)
    meta = {
        "method": "sq", "seed": cfg.seed, "m": cfg.m, "h": cfg.h,
        "kmeans_iters": cfg.kmeans_iters, "n_train": n,
        "init_stage_errors": stage_errors, "degenerate_books": degenerate,
        "init_seconds": time.perf_counter() - t0,
    }
    check_hierarchy(books)
    return Model("sq", CodebookStack(books, FULL, d), None, meta), codes


def sq_encode(model, X, start_book=0, partial=None, nthreads=1):
    """Greedy coarse-to-fine encoding.

    Book i picks the codeword closest to what books < i left over. With
    ``start_book > 0`` the codes of books < start_book are taken from
    ``partial`` and only the remaining books are encoded.
    """
    if model.codebooks.layout != FULL:
        raise StructureError(f"greedy encoding needs full-dimensional books, got {model.kind}")
    X = as_vectors(X, d=model.d)
    if not 0 <= start_book <= model.m:
        raise StructureError(f"start_book must be in [0, {model.m}]")
    if start_book > 0:
        if partial is None:
            raise StructureError("start_book > 0 requires the fixed partial codes")
        partial = as_codes(partial, model.m, model.h)
        if partial.shape[0] != X.shape[0]:
            raise StructureError("partial codes and X disagree on n")
    Y = model.to_model_frame(X)
    tables = DotTables(model.codebooks.books)
    return greedy_codes(Y, tables, partial, start_book, nthreads)


@dataclass
class RefineResult:
    model: Model
    codes: np.ndarray
    error_trace: list
    steps: list

    def __iter__(self):
        return iter((self.model, self.codes, self.error_trace))


def sq_refine(X, model, codes, refine_iters, nthreads=1):
    """Top-down codebook refinement.

    One round visits books 0..m-1; for book i it (b) replaces each codeword by
    the mean of ``X - (X_hat - C_i B_i)`` over its members (empty clusters keep
    their codeword) and (c) greedily re-encodes books i..m-1 with books < i
    fixed. ``error_trace`` starts with the input error and then holds the error
    after every (b) and (c). The best (model, codes) seen is returned.
    """
    if model.codebooks.layout != FULL:
        raise StructureError("refinement needs full-dimensional books")
    X = as_vectors(X, d=model.d)
    codes = as_codes(codes, model.m, model.h).copy()
    if codes.shape[0] != X.shape[0]:
        raise StructureError("codes and X disagree on n")
    t0 = time.perf_counter()
    m, h = model.m, model.h
    n = X.shape[0]
    Y = model.to_model_frame(X)
    books = np.array(model.codebooks.books, dtype=np.float32)
    tables = DotTables(books)
    xc = tables.project(Y) if n * m * h <= XC_CACHE_ENTRIES else None

    err = _mse(Y, _decode(books, codes))
    trace = [err]
    steps = []
    best = (err, books.copy(), codes.copy())
    for rnd in range(refine_iters):
        for i in range(m):
            prefix = _decode(books[:i], codes[:, :i])
            rest = _decode(books, codes, lo=i + 1, base=prefix)
            targets = Y - rest
            new = cluster_means(targets, codes[:, i], h, books[i].astype(np.float64))
            books[i] = new
            tables.update_book(i, books[i])
            if xc is not None:
                xc[:, i * h:(i + 1) * h] = Y @ tables.flat[i * h:(i + 1) * h].T
            err = _mse(Y, rest + books[i][codes[:, i]])
            trace.append(err)
            steps.append([rnd, i, "update", err])
            if err < best[0]:
                best = (err, books.copy(), codes.copy())

            codes = greedy_codes(Y, tables, codes, i, nthreads, xc=xc)
            err = _mse(Y, _decode(books, codes, lo=i, base=prefix))
            trace.append(err)
            steps.append([rnd, i, "encode", err])
            if err < best[0]:
                best = (err, books.copy(), codes.copy())

    meta = dict(model.meta)
    meta.update({
        "refine_iters": refine_iters,
        "refine_trace": trace,
        "refine_best_error": best[0],
        "refine_seconds": time.perf_counter() - t0,
        "reencode_scope": "books i..m-1",
    })
    out = Model(model.kind, CodebookStack(best[1], FULL, model.d), model.rotation, meta)
    return RefineResult(out, best[2], trace, steps)


def sq_train(X, cfg, nthreads=1):
    """Residual k-means initialization followed by top-down refinement."""
    model, codes = sq_init(X, cfg)
    res = sq_refine(X, model, codes, cfg.refine_iters, nthreads)
    meta = dict(res.model.meta)
    meta["error_trace"] = [meta["init_stage_errors"][-1]] + res.error_trace[1:]
    meta["train_seconds"] = meta["init_seconds"] + meta["refine_seconds"]
    return Model("sq", res.model.codebooks, None, meta), res.codes
