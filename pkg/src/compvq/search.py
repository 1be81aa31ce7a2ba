"""Asymmetric distance computation (ADC), exact k-NN and recall@N.

Block-diagonal models (PQ/OPQ) use per-subspace squared-distance tables, so
a database score is m table reads. Full-dimensional models (AQ/APQ/SQ) use the
expansion

    ||q - x_hat||^2 = ||q||^2 - 2 sum_i <q, c_i> + ||x_hat||^2

with a table of ``-2 <q, c>`` per codeword and one stored norm per database
vector; ``||q||^2`` is dropped when ranking. Scores are float64.
"""

from dataclasses import dataclass

import numpy as np

from .core import BLOCK, StructureError, as_codes, as_vectors
from .kernels import adc_scores

SUBSPACE = "subspace"
INNER_PRODUCT = "inner_product"


@dataclass
class QueryTables:
    mode: str
    tables: np.ndarray
    q_norm: float = 0.0


def build_query_tables(model, q):
    """Per-query (m, h) lookup tables; OPQ/APQ queries are rotated first."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (model.d,):
        raise StructureError(f"query must have {model.d} values, got shape {q.shape}")
    y = model.to_model_frame(q[None, :])[0]
    books = model.codebooks.books.astype(np.float64)
    m, h, w = books.shape
    if model.codebooks.layout == BLOCK:
        tables = np.empty((m, h))
        for i in range(m):
            diff = books[i] - y[i * w:(i + 1) * w]
            tables[i] = np.einsum("ij,ij->i", diff, diff)
        return QueryTables(SUBSPACE, tables, 0.0)
    tables = -2.0 * np.einsum("ihd,d->ih", books, y)
    return QueryTables(INNER_PRODUCT, tables, float(y @ y))


def code_norms(model, codes):
    """``||sum_i C_i b_i||^2`` per code from codeword norms and cross products.

    Uses ``sum_i ||c_i||^2 + 2 sum_{i<j} <c_i, c_j>``; kept in float64.
    """
    if model.codebooks.layout == BLOCK:
        raise StructureError("code norms are only needed for full-dimensional models")
    codes = as_codes(codes, model.m, model.h)
    books = model.codebooks.books.astype(np.float64)
    m = books.shape[0]
    norms = np.zeros(codes.shape[0])
    for i in range(m):
        sq = np.einsum("hd,hd->h", books[i], books[i])
        norms += sq[codes[:, i]]
    for i in range(m):
        for j in range(i + 1, m):
            cross = books[i] @ books[j].T
            norms += 2.0 * cross[codes[:, i], codes[:, j]]
    return np.maximum(norms, 0.0)


def top_n(scores, n_top):
    """Indices of the ``n_top`` smallest scores, ascending, ties to lower index."""
    scores = np.asarray(scores)
    n = scores.shape[0]
    n_top = min(int(n_top), n)
    if n_top <= 0:
        return np.empty(0, dtype=np.intp)
    if n_top < n:
        kth = np.partition(scores, n_top - 1)[n_top - 1]
        cand = np.flatnonzero(scores <= kth)
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, scores[cand]))
    return cand[order[:n_top]]


def adc_scan(tables, codes, norms=None, top=None, backend=None):
    """Rank database codes for one query; returns (indices, scores).

    Subspace mode scores ``sum_i tables[i, codes[j, i]]``; inner-product mode
    adds ``norms[j]`` (required). ``top=None`` returns the full ranking.
    """
    codes = as_codes(codes)
    if codes.shape[1] != tables.tables.shape[0]:
        raise StructureError("codes and tables disagree on m")
    if tables.mode == INNER_PRODUCT:
        if norms is None:
            raise StructureError("inner-product tables need the database code norms")
        norms = np.asarray(norms, dtype=np.float64)
        if norms.shape != (codes.shape[0],):
            raise StructureError("one norm per database code is required")
    else:
        norms = None
    scores = adc_scores(tables.tables, codes, norms, backend)
    idx = top_n(scores, codes.shape[0] if top is None else top)
    return idx, scores[idx]


def search(model, codes, queries, top, norms=None, backend=None):
    """ADC search for every query row; returns (n_q, top) indices and scores."""
    queries = as_vectors(queries, "queries", model.d)
    codes = as_codes(codes, model.m, model.h)
    if model.codebooks.layout != BLOCK and norms is None:
        norms = code_norms(model, codes)
    top = min(int(top), codes.shape[0])
    ids = np.empty((queries.shape[0], top), dtype=np.int64)
    dists = np.empty((queries.shape[0], top))
    for r, q in enumerate(queries):
        t = build_query_tables(model, q)
        idx, sc = adc_scan(t, codes, norms, top, backend)
        ids[r] = idx
        dists[r] = sc + t.q_norm
    return ids, dists


def exact_knn(base, queries, k, chunk=256):
    """Exhaustive squared-L2 k nearest neighbours, ties to the lower index.

    Candidates come from the expanded distance formula; their distances are
    then recomputed directly before the final ordering.
    """
    base = as_vectors(base, "base")
    queries = as_vectors(queries, "queries", base.shape[1])
    n = base.shape[0]
    if k < 1:
        raise StructureError("k must be >= 1")
    if k > n:
        raise StructureError(f"k={k} exceeds the database size {n}")
    B = base.astype(np.float64)
    bn = np.einsum("ij,ij->i", B, B)
    pool = min(n, 2 * k + 16)
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for lo in range(0, queries.shape[0], chunk):
        Q = queries[lo:lo + chunk].astype(np.float64)
        D = bn[None, :] - 2.0 * (Q @ B.T)
        for r in range(Q.shape[0]):
            cand = top_n(D[r], pool)
            diff = B[cand] - Q[r]
            exact = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((cand, exact))
            out[lo + r] = cand[order[:k]]
    return out


def recall_at_n(ranked, truth, ns, k=1):
    """Mean fraction of the true top-k found in the first N results, per N."""
    ranked = np.asarray(ranked)
    truth = np.asarray(truth)
    ns = [int(v) for v in ns]
    if any(b < a for a, b in zip(ns, ns[1:])):
        raise StructureError("Ns must be sorted ascending")
    if not ns or ns[0] < 1:
        raise StructureError("Ns must be positive")
    if ranked.ndim != 2 or truth.ndim != 2 or ranked.shape[0] != truth.shape[0]:
        raise StructureError("ranked and truth must be (n_queries, L) arrays of equal length")
    if ranked.shape[1] < ns[-1]:
        raise StructureError(f"ranked lists have {ranked.shape[1]} entries, need {ns[-1]}")
    if truth.shape[1] < k:
        raise StructureError(f"truth lists have {truth.shape[1]} entries, need k={k}")
    nq = ranked.shape[0]
    if nq == 0:
        return np.zeros(len(ns))
    tk = truth[:, :k]
    # position of each true neighbour in the ranked list (len if absent)
    pos = np.full(tk.shape, ranked.shape[1])
    for r in range(nq):
        where = {int(v): i for i, v in reversed(list(enumerate(ranked[r])))}
        pos[r] = [where.get(int(v), ranked.shape[1]) for v in tk[r]]
    return np.array([(pos < n).sum() / (nq * k) for n in ns])
