"""Additive quantization baseline and the APQ hybrid.

Encoding is a beam search over partial codes: every hypothesis is extended by
one codeword from each codebook it has not used yet, hypotheses with the same
code set are merged, and the best ``b`` (by squared error, then by the code
tuple) survive. Inner products between the vector and all codewords and
between all pairs of codewords are precomputed, so scoring an extension costs
O(m) lookups rather than O(d).
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .core import FULL, CodebookStack, Model, StructureError, as_codes, as_vectors
from .kernels import DotTables, beam_codes
from .opq import OPQConfig, _opq_fit
from .pq import PQConfig
from .sq import SQConfig, sq_init

# singular values below this fraction of the largest are treated as zero
LSTSQ_RCOND = 1e-10


@dataclass(frozen=True)
class AQConfig:
    m: int
    h: int = 256
    beam_train: int = 16
    beam_encode: int = 64
    iters: int = 10
    group: int = 4
    seed: int = 0
    kmeans_iters: int = 25
    # OPQ rounds used by apq_train before the grouped AQ refinement
    opq_iters: int = 100

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 1 <= self.h <= 256:
            raise ValueError("h must be in [1, 256]")
        if self.beam_train < 1 or self.beam_encode < 1:
            raise ValueError("beam depths must be >= 1")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.group < 1:
            raise ValueError("group must be >= 1")


def beam_search_encode(books, x, b):
    """Encode one vector against full-dimensional ``books`` (m, h, d).

    Returns the m subcode indices as an int array.
    """
    books = np.asarray(books, dtype=np.float64)
    if books.ndim != 3:
        raise StructureError("books must be (m, h, d)")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (books.shape[2],):
        raise StructureError(f"x must have {books.shape[2]} values")
    if b < 1:
        raise StructureError("beam depth must be >= 1")
    codes, _ = beam_codes(x[None, :], DotTables(books), b)
    return codes[0].astype(np.intp)


def aq_encode(model, X, beam=64, nthreads=1):
    """Beam-search encoding of X with a full-dimensional model."""
    if model.codebooks.layout != FULL:
        raise StructureError(f"beam encoding needs full-dimensional books, got {model.kind}")
    X = as_vectors(X, d=model.d)
    Y = model.to_model_frame(X)
    return beam_codes(Y, DotTables(model.codebooks.books), beam, nthreads)[0]


def _design(codes, h):
    n, m = codes.shape
    cols = (codes.astype(np.int64) + np.arange(m) * h).ravel()
    rows = np.repeat(np.arange(n), m)
    return scipy.sparse.csr_matrix((np.ones(n * m), (rows, cols)), shape=(n, m * h))


def _lstsq_update(Y, codes, m, h):
    B = _design(codes, h)
    G = (B.T @ B).toarray()
    rhs = np.asarray(B.T @ Y)
    C, _, rank, _ = scipy.linalg.lstsq(G, rhs, cond=LSTSQ_RCOND, lapack_driver="gelsd")
    return C.reshape(m, h, Y.shape[1]), int(rank)


def aq_codebook_update(X, codes, m, h):
    """Least-squares optimal codebooks for fixed codes.

    The d coordinates are independent problems sharing the normal matrix
    ``B^T B`` (mh x mh). That matrix is singular whenever m > 1 (each block
    of B sums to the all-ones column) or a codeword is unused, so the
    minimum-norm solution is taken. Returns a full-dimensional stack.
    """
    X = as_vectors(X)
    codes = as_codes(codes, m, h)
    if codes.shape[0] != X.shape[0]:
        raise StructureError("codes and X disagree on n")
    books, _ = _lstsq_update(X.astype(np.float64), codes, m, h)
    return CodebookStack(books, FULL, X.shape[1])


def _mse(Y, books, codes):
    Y_hat = np.zeros_like(Y)
    for i in range(books.shape[0]):
        Y_hat += books[i][codes[:, i]]
    diff = Y - Y_hat
    return float(np.einsum("ij,ij->", diff, diff) / max(Y.shape[0], 1))


def _aq_iterate(Y, books, codes, cfg, nthreads):
    """Alternate beam encoding and least-squares updates on float64 data Y."""
    m, h = books.shape[:2]
    books = np.asarray(books, dtype=np.float32)
    trace = [_mse(Y, books, codes)]
    steps = []
    regressions = []
    ranks = []
    for it in range(cfg.iters):
        new_codes, _ = beam_codes(Y, DotTables(books), cfg.beam_train, nthreads)
        err = _mse(Y, books, new_codes)
        if err > trace[-1]:
            regressions.append([it, trace[-1], err])
        codes = new_codes
        steps.append([it, "encode", err])
        C, rank = _lstsq_update(Y, codes, m, h)
        ranks.append(rank)
        books = C.astype(np.float32)
        err = _mse(Y, books, codes)
        steps.append([it, "update", err])
        trace.append(err)
    info = {"error_trace": trace, "step_errors": steps,
            "beam_regressions": regressions, "normal_ranks": ranks}
    return books, codes, info


def aq_train(X, cfg, init=None, nthreads=1):
    """AQ training; returns (model, codes).

    Starts from ``init = (books, codes)`` when given, otherwise from the
    residual k-means (stacked quantizer) initialization.
    """
    X = as_vectors(X)
    t0 = time.perf_counter()
    if init is None:
        sq_model, codes = sq_init(X, SQConfig(m=cfg.m, h=cfg.h, seed=cfg.seed,
                                              kmeans_iters=cfg.kmeans_iters, refine_iters=0))
        books = sq_model.codebooks.books
        init_name = "sq_init"
    else:
        books, codes = init
        init_name = "given"
    books = np.asarray(books, dtype=np.float32)
    codes = as_codes(codes, cfg.m, cfg.h)
    if books.shape[:2] != (cfg.m, cfg.h):
        raise StructureError("initial books do not match (m, h)")
    books, codes, info = _aq_iterate(X.astype(np.float64), books, codes, cfg, nthreads)
    meta = {
        "method": "aq", "seed": cfg.seed, "m": cfg.m, "h": cfg.h,
        "beam_train": cfg.beam_train, "iters": cfg.iters, "n_train": X.shape[0],
        "init": init_name, "codebook_solver": "min-norm lstsq (gelsd)",
        "train_seconds": time.perf_counter() - t0,
    }
    meta.update(info)
    return Model("aq", CodebookStack(books, FULL, X.shape[1]), None, meta), codes


def apq_train(X, cfg, nthreads=1):
    """OPQ, then independent AQ refinement of consecutive groups of books.

    Group g owns books g*group..(g+1)*group-1 and the rotated dimensions of
    their subspaces. Its books start as the OPQ codewords embedded in the
    group's dimensions. The result is a full-dimensional model whose codewords
    are zero outside their group, composed with the OPQ rotation.
    """
    if cfg.m % cfg.group:
        raise StructureError(f"group={cfg.group} does not divide m={cfg.m}")
    X = as_vectors(X)
    n, d = X.shape
    t0 = time.perf_counter()
    opq_cfg = OPQConfig(PQConfig(m=cfg.m, h=cfg.h, seed=cfg.seed, kmeans_iters=cfg.kmeans_iters),
                        opt_iters=cfg.opq_iters)
    opq_model, codes = _opq_fit(X, opq_cfg)
    R = opq_model.rotation
    Y = X.astype(np.float64) @ R
    w = d // cfg.m
    gw = w * cfg.group
    sub = opq_model.codebooks.books
    books = np.zeros((cfg.m, cfg.h, d), dtype=np.float32)
    group_info = []
    group_errors = []
    for g in range(cfg.m // cfg.group):
        lo, hi = g * gw, (g + 1) * gw
        init_books = np.zeros((cfg.group, cfg.h, gw), dtype=np.float32)
        for k in range(cfg.group):
            init_books[k, :, k * w:(k + 1) * w] = sub[g * cfg.group + k]
        gcodes = codes[:, g * cfg.group:(g + 1) * cfg.group]
        gbooks, gcodes, info = _aq_iterate(Y[:, lo:hi], init_books, np.ascontiguousarray(gcodes),
                                           cfg, nthreads)
        books[g * cfg.group:(g + 1) * cfg.group, :, lo:hi] = gbooks
        codes[:, g * cfg.group:(g + 1) * cfg.group] = gcodes
        group_info.append(info)
        group_errors.append(info["error_trace"][-1])
    meta = {
        "method": "apq", "seed": cfg.seed, "m": cfg.m, "h": cfg.h, "group": cfg.group,
        "beam_train": cfg.beam_train, "iters": cfg.iters, "opq_iters": cfg.opq_iters,
        "n_train": n, "opq_error_trace": opq_model.meta["error_trace"],
        "group_errors": group_errors, "groups": group_info,
        "error_trace": [opq_model.meta["error_trace"][-1], float(sum(group_errors))],
        "train_seconds": time.perf_counter() - t0,
    }
    return Model("apq", CodebookStack(books, FULL, d), R, meta), codes
