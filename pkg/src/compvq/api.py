"""Method-agnostic entry points: train by name, encode with the right encoder."""

from .aq import AQConfig, apq_train, aq_encode, aq_train
from .core import StructureError
from .opq import OPQConfig, opq_train
from .pq import PQConfig, pq_encode, pq_train
from .sq import SQConfig, sq_encode, sq_train

METHODS = ("pq", "opq", "aq", "apq", "sq")

# iteration defaults per method: PQ extra rounds, OPQ rounds, AQ rounds, SQ refinement
DEFAULT_ITERS = {"pq": 0, "opq": 100, "aq": 10, "apq": 10, "sq": 100}


def train(method, X, m, h=256, iters=None, seed=0, beam=16, kmeans_iters=25,
          group=4, opq_iters=100, nthreads=1):
    """Train ``method`` on X; returns (model, training codes or None)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    iters = DEFAULT_ITERS[method] if iters is None else iters
    if method == "pq":
        model = pq_train(X, PQConfig(m=m, h=h, seed=seed, kmeans_iters=kmeans_iters, iters=iters))
        return model, None
    if method == "opq":
        cfg = OPQConfig(PQConfig(m=m, h=h, seed=seed, kmeans_iters=kmeans_iters), opt_iters=iters)
        return opq_train(X, cfg), None
    if method == "sq":
        cfg = SQConfig(m=m, h=h, seed=seed, kmeans_iters=kmeans_iters, refine_iters=iters)
        return sq_train(X, cfg, nthreads)
    cfg = AQConfig(m=m, h=h, beam_train=beam, iters=iters, group=group, seed=seed,
                   kmeans_iters=kmeans_iters, opq_iters=opq_iters)
    if method == "aq":
        return aq_train(X, cfg, nthreads=nthreads)
    return apq_train(X, cfg, nthreads=nthreads)


def encode(model, X, beam=64, nthreads=1):
    """Encode X with the encoder matching the model kind.

    PQ/OPQ: per-subspace argmin; SQ: greedy; AQ/APQ: beam search of depth ``beam``.
    """
    if model.kind in ("pq", "opq"):
        return pq_encode(model, X)
    if model.kind == "sq":
        return sq_encode(model, X, nthreads=nthreads)
    if model.kind in ("aq", "apq"):
        return aq_encode(model, X, beam, nthreads)
    raise StructureError(f"no encoder for kind {model.kind!r}")
