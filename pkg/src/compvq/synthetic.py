"""Synthetic correlated Gaussian data for desk-scale experiments."""

import numpy as np
from scipy.stats import ortho_group


def correlated_gaussian(n, d=64, condition=100.0, seed=0):
    """Samples from N(0, S), S = Q diag(lam) Q^T with a random rotation Q.

    Eigenvalues fall geometrically from 1 to ``1 / condition``.
    Returns (X float32 (n, d), covariance).
    """
    rng = np.random.default_rng(seed)
    Q = ortho_group.rvs(d, random_state=rng)
    lam = np.geomspace(1.0, 1.0 / condition, d)
    Z = rng.standard_normal((n, d)) * np.sqrt(lam)
    return (Z @ Q.T).astype(np.float32), (Q * lam) @ Q.T


def split(X, sizes):
    """Consecutive disjoint slices of X with the given sizes."""
    out, lo = [], 0
    for s in sizes:
        out.append(X[lo:lo + s])
        lo += s
    if lo > X.shape[0]:
        raise ValueError("not enough rows for the requested split")
    return out
