"""Shared data model and reconstruction / distortion primitives.

Conventions used throughout the package:

* vector sets are ``(n, d)`` float32 arrays, one vector per row (vector-major);
* codes are ``(n, m)`` uint8 arrays, row ``j`` holding the m subcodes of vector j;
* a codebook stack stores ``books`` as ``(m, h, width)`` float32, codeword-major,
  where ``width == d`` for full-dimensional stacks and ``d // m`` for
  block-diagonal (subspace) stacks;
* a rotation ``R`` maps the quantizer's frame to the data frame: ``x ~ R @ y``.
  With row vectors this reads ``x_hat = y_hat @ R.T`` and ``y = x @ R``.

All distortion and distance sums are accumulated in float64.
"""

from dataclasses import dataclass, field

import numpy as np

FULL = "full"
BLOCK = "block"
LAYOUTS = (FULL, BLOCK)

KINDS = ("pq", "opq", "aq", "apq", "sq")
BLOCK_KINDS = ("pq", "opq")
ROTATED_KINDS = ("opq", "apq")

MAX_H = 256
ORTHO_TOL = 1e-6


class StructureError(ValueError):
    """Shapes, layouts or indices that do not fit together."""


def as_vectors(X, name="X", d=None):
    """Validate a vector set and return it as a C-contiguous float32 array."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise StructureError(f"{name} must be 2-d (n, d), got shape {X.shape}")
    if X.shape[1] < 1:
        raise StructureError(f"{name} has zero dimensionality")
    if d is not None and X.shape[1] != d:
        raise StructureError(f"{name} has d={X.shape[1]}, expected {d}")
    X = np.ascontiguousarray(X, dtype=np.float32)
    if not np.isfinite(X).all():
        raise StructureError(f"{name} contains NaN or Inf")
    return X


def as_codes(codes, m=None, h=None):
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise StructureError(f"codes must be 2-d (n, m), got shape {codes.shape}")
    if m is not None and codes.shape[1] != m:
        raise StructureError(f"codes have m={codes.shape[1]}, model has m={m}")
    if codes.size and (codes.min() < 0 or (h is not None and codes.max() >= h)):
        raise StructureError(f"code index out of range [0, {h})")
    return np.ascontiguousarray(codes, dtype=np.uint8)


def derive_rng(seed, *keys):
    """PCG64 generator for ``seed`` and a spawn path, e.g. (seed, slice index)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed, *keys):
    """A 64-bit integer seed for a sub-task, derived like :func:`derive_rng`."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class CodebookStack:
    books: np.ndarray
    layout: str
    d: int

    def __post_init__(self):
        books = np.ascontiguousarray(self.books, dtype=np.float32)
        if books.ndim != 3:
            raise StructureError(f"books must be (m, h, width), got {books.shape}")
        if self.layout not in LAYOUTS:
            raise StructureError(f"unknown layout {self.layout!r}")
        m, h, width = books.shape
        if m < 1 or h < 1 or h > MAX_H:
            raise StructureError(f"need m >= 1 and 1 <= h <= {MAX_H}, got m={m}, h={h}")
        if self.layout == FULL and width != self.d:
            raise StructureError(f"full-dimensional codewords must have {self.d} values")
        if self.layout == BLOCK and (self.d % m or width != self.d // m):
            raise StructureError(f"block layout needs m | d and width d/m (d={self.d}, m={m})")
        if not np.isfinite(books).all():
            raise StructureError("codebooks contain NaN or Inf")
        books.setflags(write=False)
        object.__setattr__(self, "books", books)
        object.__setattr__(self, "d", int(self.d))

    @property
    def m(self):
        return self.books.shape[0]

    @property
    def h(self):
        return self.books.shape[1]

    @property
    def width(self):
        return self.books.shape[2]

    def offsets(self):
        """Start offset of each subspace (block layout) or zeros (full layout)."""
        if self.layout == BLOCK:
            return [i * self.width for i in range(self.m)]
        return [0] * self.m

    def full_books(self):
        """Books embedded in d dimensions as float64, zeros outside each block."""
        if self.layout == FULL:
            return self.books.astype(np.float64)
        out = np.zeros((self.m, self.h, self.d))
        for i, off in enumerate(self.offsets()):
            out[i, :, off:off + self.width] = self.books[i]
        return out


def check_rotation(R, d=None, tol=ORTHO_TOL):
    R = np.ascontiguousarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise StructureError(f"rotation must be square, got {R.shape}")
    if d is not None and R.shape[0] != d:
        raise StructureError(f"rotation is {R.shape[0]}x{R.shape[0]}, expected {d}")
    dev = np.abs(R.T @ R - np.eye(R.shape[0])).max()
    if dev > tol:
        raise StructureError(f"rotation is not orthogonal (max |R^T R - I| = {dev:.3g})")
    return R


@dataclass(frozen=True, eq=False)
class Model:
    kind: str
    codebooks: CodebookStack
    rotation: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StructureError(f"unknown model kind {self.kind!r}")
        want = BLOCK if self.kind in BLOCK_KINDS else FULL
        if self.codebooks.layout != want:
            raise StructureError(f"{self.kind} models need {want} layout")
        if (self.rotation is not None) != (self.kind in ROTATED_KINDS):
            raise StructureError(f"rotation must be present iff kind in {ROTATED_KINDS}")
        if self.rotation is not None:
            R = check_rotation(self.rotation, self.d)
            R.setflags(write=False)
            object.__setattr__(self, "rotation", R)

    @property
    def d(self):
        return self.codebooks.d

    @property
    def m(self):
        return self.codebooks.m

    @property
    def h(self):
        return self.codebooks.h

    def to_model_frame(self, X):
        """Rotate data rows into the codebooks' frame (``R^T x``), float64."""
        X = np.asarray(X, dtype=np.float64)
        return X if self.rotation is None else X @ self.rotation


def _reconstruct_frame(codebooks, codes):
    """Sum of selected codewords, float64, in the codebooks' own frame."""
    n = codes.shape[0]
    out = np.zeros((n, codebooks.d))
    books = codebooks.books
    if codebooks.layout == BLOCK:
        w = codebooks.width
        for i in range(codebooks.m):
            out[:, i * w:(i + 1) * w] = books[i][codes[:, i]]
    else:
        for i in range(codebooks.m):
            out += books[i][codes[:, i]]
    return out


def reconstruct(model, codes, dtype=np.float32):
    """Decode codes to vectors: ``x_hat_j = R @ sum_i C_i[codes[j, i]]``.

    The sum is formed in float64; ``dtype`` only controls the returned array.
    """
    codes = as_codes(codes, model.m, model.h)
    Y = _reconstruct_frame(model.codebooks, codes)
    if model.rotation is not None:
        Y = Y @ model.rotation.T
    return Y.astype(dtype, copy=False)


def quantization_error(X, model, codes):
    """Mean squared reconstruction error ``1/n sum_j ||x_j - x_hat_j||^2``."""
    X = as_vectors(X, d=model.d)
    codes = as_codes(codes, model.m, model.h)
    if codes.shape[0] != X.shape[0]:
        raise StructureError(f"{X.shape[0]} vectors but {codes.shape[0]} codes")
    if X.shape[0] == 0:
        return 0.0
    diff = X.astype(np.float64) - reconstruct(model, codes, dtype=np.float64)
    return float(np.einsum("ij,ij->", diff, diff) / X.shape[0])


def sqdist(a, b):
    """Squared Euclidean distance, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StructureError(f"sqdist needs two equal-length vectors, got {a.shape} and {b.shape}")
    diff = a - b
    return float(diff @ diff)
