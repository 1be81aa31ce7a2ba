"""Lloyd's k-means with k-means++ seeding.

Used directly, per subspace by PQ, and on successive residuals by the
stacked quantizer. Centroids are computed in float64 and returned as float32.
"""

from dataclasses import dataclass

import numpy as np

from .core import StructureError, derive_rng

_ASSIGN_CHUNK = 16384


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    iters: int = 25
    seed: int = 0
    tol: float = 1e-5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    error_trace: list

    @property
    def error(self):
        return self.error_trace[-1]


def _min_dists(X, C):
    """Nearest centroid (lowest index on ties) and its squared distance."""
    n = X.shape[0]
    idx = np.empty(n, dtype=np.intp)
    dist = np.empty(n)
    cn = np.einsum("ij,ij->i", C, C)
    for lo in range(0, n, _ASSIGN_CHUNK):
        blk = X[lo:lo + _ASSIGN_CHUNK]
        D = cn[None, :] - 2.0 * (blk @ C.T)
        a = np.argmin(D, axis=1)
        idx[lo:lo + _ASSIGN_CHUNK] = a
        diff = blk - C[a]
        dist[lo:lo + _ASSIGN_CHUNK] = np.einsum("ij,ij->i", diff, diff)
    return idx, dist


def assign(X, centroids):
    """Index of the nearest centroid for every row of X; ties go to the lower index."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(centroids, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] == 0:
        raise StructureError("need a non-empty (k, d) centroid array")
    if X.ndim != 2 or C.shape[1] != X.shape[1]:
        raise StructureError(f"centroids have d={C.shape[1]}, data has shape {X.shape}")
    return _min_dists(X, C)[0]


def cluster_sums(X, labels, k):
    """Per-cluster coordinate sums (float64, fixed summation order) and counts."""
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k)
    return sums, counts


def cluster_means(X, labels, k, previous):
    """Means of the labelled rows; empty clusters keep their ``previous`` value."""
    sums, counts = cluster_sums(X, labels, k)
    out = np.array(previous, dtype=np.float64, copy=True)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def update_centroids(X, assignments, k):
    """Lloyd mean step.

    An empty cluster is reseeded with the point farthest from its centroid in
    the currently largest cluster (lowest index on ties). Non-empty clusters
    keep their plain means; a point is used as a seed at most once.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(assignments, dtype=np.intp)
    if labels.shape != (X.shape[0],):
        raise StructureError("one assignment per vector is required")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise StructureError(f"assignments must lie in [0, {k})")
    sums, counts = cluster_sums(X, labels, k)
    C = np.zeros((k, X.shape[1]))
    nz = counts > 0
    C[nz] = sums[nz] / counts[nz, None]
    avail = counts.copy()
    taken = np.zeros(X.shape[0], dtype=bool)
    for e in np.flatnonzero(counts == 0):
        donor = int(np.argmax(avail))
        if avail[donor] < 1:
            break
        members = np.flatnonzero((labels == donor) & ~taken)
        diff = X[members] - C[donor]
        p = members[int(np.argmax(np.einsum("ij,ij->i", diff, diff)))]
        taken[p] = True
        avail[donor] -= 1
        C[e] = X[p]
    return C


def kmeans_pp(X, k, rng):
    """k-means++ seeding (D^2 sampling) driven by ``rng``."""
    n = X.shape[0]
    C = np.empty((k, X.shape[1]))
    C[0] = X[rng.integers(n)]
    diff = X - C[0]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            cdf = np.cumsum(d2)
            pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            pick = min(pick, n - 1)
        else:
            pick = int(rng.integers(n))
        C[c] = X[pick]
        diff = X - C[c]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return C


def kmeans_train(X, cfg):
    """Run k-means; returns centroids (k, d) float32, assignments and error trace.

    ``error_trace[t]`` is the mean squared error after the t-th assignment
    step. An iteration that would raise the error is discarded and ends the
    run, so the trace is non-increasing.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise StructureError("X must be 2-d")
    n = X.shape[0]
    if n < cfg.k:
        raise StructureError(f"cannot seed k={cfg.k} centers from n={n} vectors")
    rng = derive_rng(cfg.seed)
    C = kmeans_pp(X, cfg.k, rng)
    labels, dist = _min_dists(X, C)
    err = float(dist.mean())
    trace = [err]
    for _ in range(cfg.iters):
        C_new = update_centroids(X, labels, cfg.k)
        labels_new, dist = _min_dists(X, C_new)
        err_new = float(dist.mean())
        if err_new > err:
            break
        unchanged = np.array_equal(labels_new, labels)
        C, labels = C_new, labels_new
        improvement = err - err_new
        err = err_new
        trace.append(err)
        if unchanged or improvement <= cfg.tol * err:
            break
    return KMeansResult(C.astype(np.float32), labels, trace)
