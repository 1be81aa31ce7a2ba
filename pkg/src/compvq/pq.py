"""Product quantization: independent k-means per contiguous subspace."""

import time
from dataclasses import dataclass

import numpy as np

from .core import BLOCK, CodebookStack, Model, StructureError, as_vectors, derive_seed
from .kmeans import KMeansConfig, cluster_means, kmeans_train


@dataclass(frozen=True)
class PQConfig:
    m: int
    h: int = 256
    seed: int = 0
    kmeans_iters: int = 25
    kmeans_tol: float = 1e-5
    # extra encode / centroid-update rounds after the per-slice k-means
    iters: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 1 <= self.h <= 256:
            raise ValueError("h must be in [1, 256]")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")

    def kmeans_config(self, index):
        return KMeansConfig(k=self.h, iters=self.kmeans_iters,
                            seed=derive_seed(self.seed, index), tol=self.kmeans_tol)


def encode_blocks(Y, books):
    """Nearest codeword per subspace; ``Y`` is float64 in the codebook frame."""
    m, h, w = books.shape
    codes = np.empty((Y.shape[0], m), dtype=np.uint8)
    for i in range(m):
        C = np.asarray(books[i], dtype=np.float64)
        cn = np.einsum("ij,ij->i", C, C)
        D = cn[None, :] - 2.0 * (Y[:, i * w:(i + 1) * w] @ C.T)
        codes[:, i] = np.argmin(D, axis=1)
    return codes


def decode_blocks(books, codes):
    m, h, w = books.shape
    out = np.empty((codes.shape[0], m * w))
    for i in range(m):
        out[:, i * w:(i + 1) * w] = books[i][codes[:, i]]
    return out


def _mse(A, B):
    diff = A - B
    return float(np.einsum("ij,ij->", diff, diff) / max(A.shape[0], 1))


def block_alternation(X, books, codes, R, iters, rotation_step=None):
    """Alternate encode / centroid update / optional rotation update.

    ``X`` is float64 data, ``books`` float64 (m, h, w), ``R`` a (d, d) rotation.
    ``rotation_step(X, Y_hat)`` returns the new rotation; when None the
    rotation stays fixed. Returns (books, codes, R, trace, steps) where
    ``trace[t]`` is the error after iteration t and ``steps`` lists the error
    after each sub-step as (iteration, step, error).
    """
    m, h, w = books.shape
    books = books.copy()
    Y = X @ R
    trace = [_mse(Y, decode_blocks(books, codes))]
    steps = []
    for it in range(iters):
        codes = encode_blocks(Y, books)
        steps.append((it, "encode", _mse(Y, decode_blocks(books, codes))))
        for i in range(m):
            books[i] = cluster_means(Y[:, i * w:(i + 1) * w], codes[:, i], h, books[i])
        Y_hat = decode_blocks(books, codes)
        steps.append((it, "codebooks", _mse(Y, Y_hat)))
        if rotation_step is not None:
            R = rotation_step(X, Y_hat)
            Y = X @ R
            steps.append((it, "rotation", _mse(Y, Y_hat)))
        trace.append(steps[-1][2])
    return books, codes, R, trace, steps


def _slice_kmeans(X, cfg):
    d = X.shape[1]
    w = d // cfg.m
    books = np.empty((cfg.m, cfg.h, w))
    codes = np.empty((X.shape[0], cfg.m), dtype=np.uint8)
    errors = []
    for i in range(cfg.m):
        res = kmeans_train(X[:, i * w:(i + 1) * w], cfg.kmeans_config(i))
        books[i] = res.centroids
        codes[:, i] = res.assignments
        errors.append(res.error)
    return books, codes, errors


def _pq_fit(X, cfg):
    X = as_vectors(X)
    n, d = X.shape
    if d % cfg.m:
        raise StructureError(f"m={cfg.m} does not divide d={d}")
    t0 = time.perf_counter()
    X64 = X.astype(np.float64)
    books, codes, slice_errors = _slice_kmeans(X64, cfg)
    # float32 centroids are the model; re-encode against them
    books = books.astype(np.float32).astype(np.float64)
    codes = encode_blocks(X64, books)
    books, codes, _, trace, _ = block_alternation(X64, books, codes, np.eye(d), cfg.iters)
    meta = {
        "method": "pq", "seed": cfg.seed, "m": cfg.m, "h": cfg.h,
        "kmeans_iters": cfg.kmeans_iters, "iters": cfg.iters, "n_train": n,
        "slice_kmeans_errors": slice_errors, "error_trace": trace,
        "train_seconds": time.perf_counter() - t0,
    }
    model = Model("pq", CodebookStack(books, BLOCK, d), None, meta)
    return model, codes


def pq_train(X, cfg):
    """Train a PQ model; slice i is clustered with seed derived from (seed, i)."""
    return _pq_fit(X, cfg)[0]


def pq_encode(model, X):
    """Per-subspace nearest-codeword codes (OPQ models rotate X by R^T first)."""
    if model.codebooks.layout != BLOCK:
        raise StructureError(f"pq_encode needs a block-diagonal model, got {model.kind}")
    X = as_vectors(X, d=model.d)
    Y = model.to_model_frame(X)
    return encode_blocks(Y, model.codebooks.books)
