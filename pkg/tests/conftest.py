import numpy as np
import pytest

from compvq.core import BLOCK, FULL, CodebookStack, Model


def random_model(kind, d, m, h, seed=0, scale=1.0):
    """A model with random codebooks (and a random rotation for opq/apq)."""
    rng = np.random.default_rng(seed)
    layout = BLOCK if kind in ("pq", "opq") else FULL
    width = d // m if layout == BLOCK else d
    books = (rng.standard_normal((m, h, width)) * scale).astype(np.float32)
    R = None
    if kind in ("opq", "apq"):
        R, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Model(kind, CodebookStack(books, layout, d), R)


def random_codes(n, m, h, seed=0):
    return np.random.default_rng(seed).integers(0, h, size=(n, m)).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
