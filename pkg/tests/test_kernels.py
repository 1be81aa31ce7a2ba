import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compvq.kernels import DotTables, adc_scores, available_backends, beam_codes, greedy_codes

compiled = pytest.mark.skipif("compiled" not in available_backends(),
                              reason="compiled extension not built")


def _instance(seed, n, m, h, d):
    rng = np.random.default_rng(seed)
    books = (rng.standard_normal((m, h, d)) / np.arange(1, m + 1)[:, None, None]).astype(np.float32)
    Y = rng.standard_normal((n, d))
    return books, Y


@compiled
@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 30), m=st.integers(1, 4), h=st.integers(1, 12), b=st.integers(1, 20),
       seed=st.integers(0, 10**6))
def test_beam_backends_identical(n, m, h, b, seed):
    books, Y = _instance(seed, n, m, h, 6)
    t = DotTables(books)
    c1, s1 = beam_codes(Y, t, b, backend="compiled")
    c2, s2 = beam_codes(Y, t, b, backend="python")
    assert c1.tobytes() == c2.tobytes()
    assert s1.tobytes() == s2.tobytes()


@compiled
@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 30), m=st.integers(1, 5), h=st.integers(1, 12), start=st.integers(0, 5),
       seed=st.integers(0, 10**6))
def test_greedy_backends_identical(n, m, h, start, seed):
    books, Y = _instance(seed, n, m, h, 5)
    start = min(start, m)
    t = DotTables(books)
    fixed = np.random.default_rng(seed).integers(0, h, (n, m)).astype(np.uint8)
    a = greedy_codes(Y, t, fixed, start, backend="compiled")
    b = greedy_codes(Y, t, fixed, start, backend="python")
    assert a.tobytes() == b.tobytes()


@compiled
@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 50), m=st.integers(1, 6), h=st.integers(1, 16), norms=st.booleans(),
       seed=st.integers(0, 10**6))
def test_adc_backends_identical(n, m, h, norms, seed):
    rng = np.random.default_rng(seed)
    tables = rng.standard_normal((m, h))
    codes = rng.integers(0, h, (n, m)).astype(np.uint8)
    nv = rng.random(n) if norms else None
    a = adc_scores(tables, codes, nv, backend="compiled")
    b = adc_scores(tables, codes, nv, backend="python")
    assert a.tobytes() == b.tobytes()


@compiled
def test_thread_count_does_not_change_output():
    books, Y = _instance(0, 500, 4, 16, 8)
    t = DotTables(books)
    c1, s1 = beam_codes(Y, t, 8, nthreads=1, backend="compiled")
    c4, s4 = beam_codes(Y, t, 8, nthreads=4, backend="compiled")
    assert c1.tobytes() == c4.tobytes() and s1.tobytes() == s4.tobytes()
    g1 = greedy_codes(Y, t, nthreads=1, backend="compiled")
    g4 = greedy_codes(Y, t, nthreads=4, backend="compiled")
    assert g1.tobytes() == g4.tobytes()


@pytest.mark.parametrize("backend", available_backends())
def test_beam_scores_are_squared_errors(backend):
    books, Y = _instance(3, 40, 3, 6, 5)
    codes, scores = beam_codes(Y, DotTables(books), 4, backend=backend)
    B = books.astype(np.float64)
    resid = Y - sum(B[i][codes[:, i]] for i in range(3))
    np.testing.assert_allclose(scores, (resid ** 2).sum(1), rtol=1e-9, atol=1e-9)


def test_table_update_matches_rebuild():
    books, _ = _instance(1, 0, 3, 5, 4)
    t = DotTables(books)
    new = np.random.default_rng(2).standard_normal((5, 4))
    t.update_book(1, new)
    books = books.astype(np.float64)
    books[1] = new
    ref = DotTables(books)
    np.testing.assert_allclose(t.cross, ref.cross, rtol=1e-12)
    np.testing.assert_allclose(t.cnorm, ref.cnorm, rtol=1e-12)


def test_environment_forces_python_backend():
    env = dict(os.environ, COMPVQ_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import compvq; print(compvq.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
