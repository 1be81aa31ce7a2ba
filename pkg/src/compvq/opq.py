"""Optimized product quantization: a learned rotation in front of PQ.

Training starts from the PQ solution (rotation = identity) and alternates
block-wise encoding, centroid updates and an orthogonal Procrustes update of
the rotation. Each sub-step minimizes the objective over its own variables,
so the training error never increases.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .core import BLOCK, CodebookStack, Model, StructureError, as_vectors
from .pq import PQConfig, _pq_fit, block_alternation


@dataclass(frozen=True)
class OPQConfig:
    pq: PQConfig
    opt_iters: int = 100
    # keep R = I; the alternation then reduces to PQ's extra rounds
    freeze_rotation: bool = False

    def __post_init__(self):
        if self.opt_iters < 0:
            raise ValueError("opt_iters must be >= 0")


@dataclass
class _RotationLog:
    rank_deficient: int = 0
    ranks: list = field(default_factory=list)


def _procrustes(X, Xhat):
    M = np.asarray(X, dtype=np.float64).T @ np.asarray(Xhat, dtype=np.float64)
    U, S, Vt = np.linalg.svd(M)
    # fix singular-vector signs: largest-magnitude entry of each u_k positive
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[pivot, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    U = U * signs
    Vt = Vt * signs[:, None]
    tol = S[0] * M.shape[0] * np.finfo(np.float64).eps if S.size else 0.0
    rank = int((S > tol).sum())
    return U @ Vt, rank


def procrustes_rotation(X, Xhat):
    """Orthogonal R minimizing ``sum_j ||x_j - R xhat_j||^2``.

    With rows as vectors, ``R = U V^T`` where ``U S V^T = svd(X^T Xhat)``.
    Rank-deficient cross-covariances still give an orthogonal R; signs of
    singular vectors are fixed so the result is reproducible.
    """
    X = np.asarray(X)
    Xhat = np.asarray(Xhat)
    if X.shape != Xhat.shape or X.ndim != 2:
        raise StructureError(f"shape mismatch: {X.shape} vs {Xhat.shape}")
    return _procrustes(X, Xhat)[0]


def _opq_fit(X, cfg):
    X = as_vectors(X)
    t0 = time.perf_counter()
    pq_model, codes = _pq_fit(X, cfg.pq)
    n, d = X.shape
    X64 = X.astype(np.float64)
    log = _RotationLog()

    def rotation_step(Xd, Y_hat):
        R, rank = _procrustes(Xd, Y_hat)
        log.ranks.append(rank)
        if rank < d:
            log.rank_deficient += 1
        return R

    books = pq_model.codebooks.books.astype(np.float64)
    step = None if cfg.freeze_rotation else rotation_step
    books, codes, R, trace, steps = block_alternation(X64, books, codes, np.eye(d), cfg.opt_iters, step)
    meta = dict(pq_model.meta)
    meta.update({
        "method": "opq", "opt_iters": cfg.opt_iters,
        "freeze_rotation": cfg.freeze_rotation,
        "codebook_update": "centroid",
        "error_trace": trace,
        "step_errors": [[it, name, err] for it, name, err in steps],
        "rank_deficient_rotations": log.rank_deficient,
        "train_seconds": time.perf_counter() - t0,
    })
    model = Model("opq", CodebookStack(books, BLOCK, d), R, meta)
    return model, codes


def opq_train(X, cfg):
    """Learn rotation and block-diagonal codebooks by alternation."""
    return _opq_fit(X, cfg)[0]
