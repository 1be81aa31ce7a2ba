import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compvq.io import (
    FormatError,
    load_model,
    read_bvecs,
    read_codes,
    read_fvecs,
    read_ivecs,
    save_model,
    write_bvecs,
    write_codes,
    write_fvecs,
    write_ivecs,
)
from compvq.opq import OPQConfig, opq_train
from compvq.pq import PQConfig
from compvq.sq import SQConfig, sq_train

from conftest import random_model


def test_one_record_fvecs_layout(tmp_path):
    p = tmp_path / "one.fvecs"
    write_fvecs(p, np.array([[1.0, -2.5]], dtype=np.float32))
    assert p.read_bytes() == bytes([2, 0, 0, 0]) + struct.pack("<ff", 1.0, -2.5)
    assert p.read_bytes().hex() == "020000000000803f000020c0"


def test_empty_fvecs(tmp_path):
    p = tmp_path / "empty.fvecs"
    p.write_bytes(b"")
    assert read_fvecs(p, expected_dim=7).shape == (0, 7)
    with pytest.raises(FormatError):
        read_fvecs(p)


def test_fvecs_roundtrip(tmp_path, rng):
    X = rng.standard_normal((100, 16)).astype(np.float32)
    write_fvecs(tmp_path / "x.fvecs", X)
    assert read_fvecs(tmp_path / "x.fvecs").tobytes() == X.tobytes()


def test_vecs_errors(tmp_path):
    p = tmp_path / "bad.fvecs"
    good = struct.pack("<i2f", 2, 1.0, 2.0)
    p.write_bytes(good + struct.pack("<i3f", 3, 1.0, 2.0, 3.0))
    with pytest.raises(FormatError, match="byte offset 12"):
        read_fvecs(p)
    p.write_bytes(good + good[:7])
    with pytest.raises(FormatError, match="byte offset 12"):
        read_fvecs(p)
    p.write_bytes(struct.pack("<i", -1) + b"\0" * 8)
    with pytest.raises(FormatError, match="byte offset 0"):
        read_fvecs(p)
    p.write_bytes(good)
    with pytest.raises(FormatError):
        read_fvecs(p, expected_dim=3)
    with pytest.raises(FormatError):
        read_fvecs(p, max_dim=1)


def test_codes_known_layout(tmp_path):
    p = tmp_path / "c.codes"
    codes = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.uint8)
    write_codes(p, codes, 16)
    expect = b"CVQC" + struct.pack("<IIIQ", 1, 2, 16, 3) + bytes([1, 2, 3, 4, 5, 6])
    assert p.read_bytes() == expect
    got, h = read_codes(p)
    assert h == 16
    np.testing.assert_array_equal(got, codes)


def test_codes_empty_is_header_only(tmp_path):
    p = tmp_path / "e.codes"
    write_codes(p, np.zeros((0, 4), dtype=np.uint8), 256)
    assert os.path.getsize(p) == 24
    codes, h = read_codes(p)
    assert codes.shape == (0, 4) and h == 256


def test_codes_errors(tmp_path):
    p = tmp_path / "c.codes"
    write_codes(p, np.zeros((3, 2), dtype=np.uint8), 4)
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        read_codes(p)
    p.write_bytes(raw[:4] + struct.pack("<I", 2) + raw[8:])
    with pytest.raises(FormatError, match="version"):
        read_codes(p)
    p.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_codes(p)
    p.write_bytes(raw[:16] + struct.pack("<Q", 1 << 40))
    with pytest.raises(FormatError, match="cap"):
        read_codes(p)
    p.write_bytes(raw[:-1] + b"\x09")
    with pytest.raises(FormatError):
        read_codes(p)
    with pytest.raises(FormatError):
        write_codes(p, np.full((1, 1), 5, dtype=np.uint8), 4)


def _same_model(a, b):
    assert a.kind == b.kind and a.d == b.d
    assert a.codebooks.layout == b.codebooks.layout
    assert a.codebooks.books.tobytes() == b.codebooks.books.tobytes()
    if a.rotation is None:
        assert b.rotation is None
    else:
        assert a.rotation.tobytes() == b.rotation.tobytes()


def test_identity_rotation_opq_roundtrip(tmp_path, rng):
    X = rng.standard_normal((100, 8)).astype(np.float32)
    model = opq_train(X, OPQConfig(PQConfig(m=2, h=4), opt_iters=0))
    save_model(model, tmp_path / "m.bin")
    loaded = load_model(tmp_path / "m.bin")
    _same_model(model, loaded)
    np.testing.assert_array_equal(loaded.rotation, np.eye(8))


def test_sq_roundtrip_with_meta(tmp_path, rng):
    X = rng.standard_normal((300, 6)).astype(np.float32)
    model, _ = sq_train(X, SQConfig(m=4, h=8, refine_iters=1))
    save_model(model, tmp_path / "sq.bin")
    loaded = load_model(tmp_path / "sq.bin")
    _same_model(model, loaded)
    assert loaded.meta["refine_iters"] == 1


def test_model_errors(tmp_path):
    model = random_model("aq", 4, 2, 3)
    p = tmp_path / "m.bin"
    save_model(model, p)
    raw = p.read_bytes()
    p.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_model(p)
    p.write_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])
    with pytest.raises(FormatError, match="version"):
        load_model(p)
    p.write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        load_model(p)
    p.write_bytes(raw)
    with pytest.raises(FormatError, match="cap"):
        load_model(p, max_bytes=10)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 20), d=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_vecs_roundtrip_property(tmp_path_factory, n, d, seed):
    rng = np.random.default_rng(seed)
    tmp = tmp_path_factory.mktemp("vecs")
    F = rng.standard_normal((n, d)).astype(np.float32)
    B = rng.integers(0, 256, (n, d)).astype(np.uint8)
    I = rng.integers(-2**31, 2**31, (n, d)).astype(np.int32)
    write_fvecs(tmp / "a.fvecs", F)
    write_bvecs(tmp / "a.bvecs", B)
    write_ivecs(tmp / "a.ivecs", I)
    assert read_fvecs(tmp / "a.fvecs", expected_dim=d).tobytes() == F.tobytes()
    assert read_bvecs(tmp / "a.bvecs", expected_dim=d).tobytes() == B.tobytes()
    assert read_ivecs(tmp / "a.ivecs", expected_dim=d).tobytes() == I.tobytes()


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 30), m=st.integers(1, 8), h=st.integers(1, 256), seed=st.integers(0, 2**32 - 1))
def test_codes_roundtrip_property(tmp_path_factory, n, m, h, seed):
    codes = np.random.default_rng(seed).integers(0, h, (n, m)).astype(np.uint8)
    p = tmp_path_factory.mktemp("codes") / "c.codes"
    write_codes(p, codes, h)
    got, h2 = read_codes(p)
    assert h2 == h and got.shape == (n, m) and got.tobytes() == codes.tobytes()


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(["pq", "opq", "aq", "apq", "sq"]), m=st.integers(1, 4),
       h=st.integers(1, 16), seed=st.integers(0, 2**32 - 1))
def test_model_roundtrip_property(tmp_path_factory, kind, m, h, seed):
    model = random_model(kind, 2 * m, m, h, seed=seed)
    p = tmp_path_factory.mktemp("model") / "m.bin"
    save_model(model, p)
    _same_model(model, load_model(p))
