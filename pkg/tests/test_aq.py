import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compvq.aq import AQConfig, apq_train, aq_codebook_update, aq_encode, aq_train, beam_search_encode
from compvq.core import FULL, CodebookStack, Model, quantization_error, reconstruct
from compvq.kmeans import cluster_means
from compvq.opq import OPQConfig, _opq_fit
from compvq.pq import PQConfig, pq_encode, pq_train
from compvq.sq import SQConfig, sq_encode, sq_init


def _cost(books, x, code):
    r = x - sum(books[i, c] for i, c in enumerate(code))
    return float(r @ r)


def _brute_force(books, x):
    m, h, _ = books.shape
    return min(itertools.product(range(h), repeat=m), key=lambda c: (_cost(books, x, c), c))


def test_single_book_is_argmin(rng):
    books = rng.standard_normal((1, 9, 5))
    for b in (1, 3, 20):
        for x in rng.standard_normal((10, 5)):
            assert beam_search_encode(books, x, b)[0] == np.argmin(((books[0] - x) ** 2).sum(1))


@pytest.mark.parametrize("m,h,b", [(2, 4, 16), (3, 4, 64)])
def test_matches_exhaustive_enumeration(rng, m, h, b):
    books = rng.standard_normal((m, h, 6)).astype(np.float32).astype(np.float64)
    for x in rng.standard_normal((40, 6)):
        got = beam_search_encode(books, x, b)
        best = _brute_force(books, x)
        assert _cost(books, x, got) == pytest.approx(_cost(books, x, best), rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(2, 3), h=st.integers(2, 5), seed=st.integers(0, 10**6))
def test_large_beam_is_exhaustive(m, h, seed):
    # with b >= m * h^(m-1) no partial code is ever pruned
    rng = np.random.default_rng(seed)
    books = rng.standard_normal((m, h, 4))
    x = rng.standard_normal(4)
    got = beam_search_encode(books, x, m * h ** (m - 1))
    assert _cost(books, x, got) == pytest.approx(_cost(books, x, _brute_force(books, x)), rel=1e-10, abs=1e-12)


def _greedy_vs_beam(books, X, beam):
    model = Model("sq", CodebookStack(books, FULL, books.shape[2]))
    rb = ((X - reconstruct(model, aq_encode(model, X, beam=beam), np.float64)) ** 2).sum(1)
    rg = ((X - reconstruct(model, sq_encode(model, X), np.float64)) ** 2).sum(1)
    return rb, rg


def test_beam_of_width_h_can_lose_to_greedy():
    # every book competes in the first expansion, so greedy's first pick can be pruned
    rng = np.random.default_rng(2)
    books = (rng.standard_normal((3, 2, 5)) / np.arange(1, 4)[:, None, None]).astype(np.float32)
    X = rng.standard_normal((20, 5)).astype(np.float32)
    rb, rg = _greedy_vs_beam(books, X, beam=2)
    np.testing.assert_array_equal(np.flatnonzero(rb > rg + 1e-9), [13, 19])


@settings(max_examples=30, deadline=None)
@given(m=st.integers(2, 3), h=st.integers(2, 5), seed=st.integers(0, 10**6))
def test_exhaustive_beam_never_worse_than_greedy(m, h, seed):
    rng = np.random.default_rng(seed)
    books = rng.standard_normal((m, h, 5)).astype(np.float32)
    X = rng.standard_normal((10, 5)).astype(np.float32)
    rb, rg = _greedy_vs_beam(books, X, beam=m * h ** (m - 1))
    assert np.all(rb <= rg + 1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_beam_beats_greedy_on_average_for_stacked_books(seed):
    rng = np.random.default_rng(seed)
    X = (rng.standard_normal((600, 8)) * np.geomspace(1, 0.2, 8)).astype(np.float32)
    model, _ = sq_init(X, SQConfig(m=3, h=8, seed=seed))
    rb, rg = _greedy_vs_beam(model.codebooks.books, X, beam=8)
    assert rb.mean() <= rg.mean()


def test_update_single_book_is_cluster_means(rng):
    X = rng.standard_normal((50, 3)).astype(np.float32)
    codes = rng.integers(0, 5, (50, 1)).astype(np.uint8)
    codes[:5, 0] = np.arange(5)
    books = aq_codebook_update(X, codes, 1, 5).books
    expect = cluster_means(X.astype(np.float64), codes[:, 0], 5, np.zeros((5, 3)))
    np.testing.assert_allclose(books[0], expect, rtol=1e-5, atol=1e-6)


def test_update_disjoint_singletons_reconstruct_exactly(rng):
    X = rng.standard_normal((4, 3)).astype(np.float32)
    codes = np.repeat(np.arange(4, dtype=np.uint8)[:, None], 2, 1)
    stack = aq_codebook_update(X, codes, 2, 4)
    model = Model("aq", stack)
    np.testing.assert_allclose(reconstruct(model, codes), X, atol=1e-6)
    # minimum-norm split of each target between its two codewords
    np.testing.assert_allclose(stack.books[0], X / 2, atol=1e-6)


def test_update_matches_dense_least_squares(rng):
    n, m, h, d = 20, 2, 2, 3
    X = rng.standard_normal((n, d)).astype(np.float32)
    codes = rng.integers(0, h, (n, m)).astype(np.uint8)
    B = np.zeros((n, m * h))
    for j in range(n):
        for i in range(m):
            B[j, i * h + codes[j, i]] = 1.0
    oracle = np.linalg.pinv(B.T @ B) @ B.T @ X.astype(np.float64)
    got = aq_codebook_update(X, codes, m, h).books.reshape(m * h, d)
    np.testing.assert_allclose(got, oracle, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_update_never_increases_error(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((200, 6)).astype(np.float32)
    model, codes = sq_init(X, SQConfig(m=3, h=8, seed=seed))
    before = quantization_error(X, model, codes)
    after = quantization_error(X, Model("aq", aq_codebook_update(X, codes, 3, 8)), codes)
    assert after <= before * (1 + 1e-8)


def test_zero_iterations_returns_initialization(rng):
    X = rng.standard_normal((200, 4)).astype(np.float32)
    init, codes = sq_init(X, SQConfig(m=2, h=4, seed=1))
    model, out = aq_train(X, AQConfig(m=2, h=4, iters=0, seed=1))
    assert model.codebooks.books.tobytes() == init.codebooks.books.tobytes()
    np.testing.assert_array_equal(out, codes)


def test_trace_regressions_are_flagged():
    X = np.random.default_rng(3).standard_normal((64, 4)).astype(np.float32)
    model, codes = aq_train(X, AQConfig(m=2, h=4, iters=8, seed=3, beam_train=2))
    trace = model.meta["error_trace"]
    flagged = {it for it, _, _ in model.meta["beam_regressions"]}
    for it, (a, b) in enumerate(zip(trace, trace[1:])):
        if b > a * (1 + 1e-12):
            assert it in flagged
    steps = model.meta["step_errors"]
    for (_, _, enc), (_, _, upd) in zip(steps[::2], steps[1::2]):
        assert upd <= enc * (1 + 1e-8)
    assert quantization_error(X, model, codes) == pytest.approx(trace[-1], rel=1e-5)


def test_aq_beats_pq():
    rng = np.random.default_rng(0)
    X = (rng.standard_normal((2000, 16)) * np.geomspace(1, 0.1, 16)).astype(np.float32)
    aq, pq = [], []
    for seed in range(5):
        model, _ = aq_train(X, AQConfig(m=4, h=16, iters=3, seed=seed))
        aq.append(quantization_error(X, model, aq_encode(model, X, 16)))
        p = pq_train(X, PQConfig(m=4, h=16, seed=seed))
        pq.append(quantization_error(X, p, pq_encode(p, X)))
    assert np.median(aq) <= np.median(pq)


def test_apq_single_group_is_aq_on_rotated_data(rng):
    X = rng.standard_normal((300, 8)).astype(np.float32)
    cfg = AQConfig(m=2, h=4, iters=2, group=2, opq_iters=3, seed=2)
    model, codes = apq_train(X, cfg)
    opq, opq_codes = _opq_fit(X, OPQConfig(PQConfig(m=2, h=4, seed=2), opt_iters=3))
    Y = (X.astype(np.float64) @ opq.rotation).astype(np.float32)
    init = (opq.codebooks.full_books().astype(np.float32), opq_codes)
    ref, ref_codes = aq_train(Y, cfg, init=init)
    np.testing.assert_allclose(model.codebooks.books, ref.codebooks.books, atol=1e-5)
    np.testing.assert_array_equal(codes, ref_codes)


def test_apq_error_is_sum_of_group_errors():
    X = np.random.default_rng(4).standard_normal((400, 16)).astype(np.float32)
    model, codes = apq_train(X, AQConfig(m=8, h=4, iters=2, group=4, opq_iters=3))
    assert len(model.meta["group_errors"]) == 2
    total = quantization_error(X, model, codes)
    assert total == pytest.approx(sum(model.meta["group_errors"]), rel=1e-5)
    assert np.abs(model.rotation.T @ model.rotation - np.eye(16)).max() < 1e-6


def test_apq_unit_groups_are_lloyd_refinements(rng):
    X = rng.standard_normal((300, 4)).astype(np.float32)
    cfg = AQConfig(m=2, h=4, iters=3, group=1, opq_iters=2, seed=1)
    model, _ = apq_train(X, cfg)
    opq, codes = _opq_fit(X, OPQConfig(PQConfig(m=2, h=4, seed=1), opt_iters=2))
    Y = X.astype(np.float64) @ opq.rotation
    for i in range(2):
        sl = Y[:, 2 * i:2 * i + 2]
        C = opq.codebooks.books[i].astype(np.float64)
        for _ in range(3):
            lab = ((sl[:, None, :] - C.astype(np.float32).astype(np.float64)[None]) ** 2).sum(-1).argmin(1)
            used = np.bincount(lab, minlength=4) > 0
            C = np.where(used[:, None], cluster_means(sl, lab, 4, np.zeros((4, 2))), 0.0)
        np.testing.assert_allclose(model.codebooks.books[i, :, 2 * i:2 * i + 2], C, atol=1e-5)
