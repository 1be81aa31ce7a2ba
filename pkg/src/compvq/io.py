"""Readers and writers for .fvecs/.bvecs/.ivecs, code files and model files.

Everything is little-endian.

fvecs / bvecs / ivecs
    n records of ``int32 d`` followed by d components (float32 / uint8 /
    int32). All records share d.

codes (``.codes``)
    header ``b"CVQC" | uint32 version | uint32 m | uint32 h | uint64 n``
    (24 bytes), then n*m uint8 subcodes, vector-major (the m codes of vector
    0, then vector 1, ...).

model
    header ``b"CVQM" | uint32 version | uint8 kind | uint8 layout |
    uint8 has_rotation | uint8 0 | uint32 d | uint32 m | uint32 h |
    uint32 width`` (28 bytes), then m*h*width float32 codewords
    (book-major, codeword-major), then d*d float64 rotation entries
    (row-major) when present. Training metadata is written as JSON to the
    sidecar ``<path>.json``.
"""

import json
import os
import struct

import numpy as np

from .core import BLOCK, FULL, KINDS, CodebookStack, Model

MAX_DIM = 1 << 20
MAX_PAYLOAD = 1 << 34
CHUNK_BYTES = 1 << 24

CODES_MAGIC = b"CVQC"
MODEL_MAGIC = b"CVQM"
CODES_VERSION = 1
MODEL_VERSION = 1

_CODES_HEADER = struct.Struct("<4sIIIQ")
_MODEL_HEADER = struct.Struct("<4sIBBBBIIII")
_LAYOUT_IDS = {FULL: 0, BLOCK: 1}


class FormatError(ValueError):
    """Malformed or incompatible file."""


def _read_vecs(path, dtype, expected_dim=None, max_dim=MAX_DIM):
    dtype = np.dtype(dtype).newbyteorder("<")
    size = os.path.getsize(path)
    if size == 0:
        if expected_dim is None:
            raise FormatError(f"{path}: empty file and no expected dimension given")
        return np.empty((0, expected_dim), dtype=dtype.newbyteorder("="))
    with open(path, "rb") as f:
        head = f.read(4)
        if len(head) < 4:
            raise FormatError(f"{path}: truncated header at byte offset 0")
        d = struct.unpack("<i", head)[0]
        if d <= 0 or d > max_dim:
            raise FormatError(f"{path}: invalid dimension {d} at byte offset 0")
        if expected_dim is not None and d != expected_dim:
            raise FormatError(f"{path}: dimension {d} at byte offset 0, expected {expected_dim}")
        rec = 4 + d * dtype.itemsize
        # complete records are checked first so a wrong dimension is reported where it occurs
        n, extra = divmod(size, rec)
        out = np.empty((n, d), dtype=dtype.newbyteorder("="))
        f.seek(0)
        per = max(1, CHUNK_BYTES // rec)
        for lo in range(0, n, per):
            k = min(per, n - lo)
            buf = np.frombuffer(f.read(k * rec), dtype=np.uint8).reshape(k, rec)
            dims = buf[:, :4].copy().view("<i4").ravel()
            bad = np.flatnonzero(dims != d)
            if bad.size:
                r = lo + int(bad[0])
                raise FormatError(f"{path}: record {r} has dimension {int(dims[bad[0]])} "
                                  f"(expected {d}) at byte offset {r * rec}")
            out[lo:lo + k] = buf[:, 4:].copy().view(dtype)
        if extra:
            raise FormatError(f"{path}: truncated record at byte offset {n * rec}")
    return out


def _write_vecs(path, X, dtype):
    dtype = np.dtype(dtype).newbyteorder("<")
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] < 1:
        raise FormatError(f"need a 2-d array with d >= 1, got shape {X.shape}")
    n, d = X.shape
    rec = 4 + d * dtype.itemsize
    per = max(1, CHUNK_BYTES // rec)
    with open(path, "wb") as f:
        for lo in range(0, n, per):
            blk = np.ascontiguousarray(X[lo:lo + per], dtype=dtype)
            buf = np.empty((blk.shape[0], rec), dtype=np.uint8)
            buf[:, :4] = np.frombuffer(struct.pack("<i", d), dtype=np.uint8)
            buf[:, 4:] = blk.view(np.uint8).reshape(blk.shape[0], -1)
            f.write(buf.tobytes())


def read_fvecs(path, expected_dim=None, max_dim=MAX_DIM):
    return _read_vecs(path, np.float32, expected_dim, max_dim)


def write_fvecs(path, X):
    _write_vecs(path, X, np.float32)


def read_bvecs(path, expected_dim=None, max_dim=MAX_DIM):
    return _read_vecs(path, np.uint8, expected_dim, max_dim)


def write_bvecs(path, X):
    _write_vecs(path, X, np.uint8)


def read_ivecs(path, expected_dim=None, max_dim=MAX_DIM):
    return _read_vecs(path, np.int32, expected_dim, max_dim)


def write_ivecs(path, X):
    _write_vecs(path, X, np.int32)


def read_vectors(path, expected_dim=None):
    """Read .fvecs or .bvecs (by extension) as float32."""
    if str(path).endswith(".bvecs"):
        return read_bvecs(path, expected_dim).astype(np.float32)
    return read_fvecs(path, expected_dim)


def write_codes(path, codes, h):
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if codes.ndim != 2:
        raise FormatError(f"codes must be (n, m), got shape {codes.shape}")
    if not 1 <= h <= 256:
        raise FormatError(f"h={h} does not fit one byte per subcode")
    n, m = codes.shape
    if codes.size and int(codes.max()) >= h:
        raise FormatError(f"code index {int(codes.max())} >= h={h}")
    with open(path, "wb") as f:
        f.write(_CODES_HEADER.pack(CODES_MAGIC, CODES_VERSION, m, h, n))
        f.write(codes.tobytes())


def read_codes(path, max_bytes=MAX_PAYLOAD):
    """Returns (codes (n, m) uint8, h)."""
    size = os.path.getsize(path)
    with open(path, "rb") as f:
        head = f.read(_CODES_HEADER.size)
        if len(head) < _CODES_HEADER.size:
            raise FormatError(f"{path}: truncated codes header")
        magic, version, m, h, n = _CODES_HEADER.unpack(head)
        if magic != CODES_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not a codes file")
        if version != CODES_VERSION:
            raise FormatError(f"{path}: codes format version {version}, "
                              f"this reader supports {CODES_VERSION}")
        if m < 1 or not 1 <= h <= 256:
            raise FormatError(f"{path}: invalid header m={m}, h={h}")
        payload = n * m
        if payload > max_bytes:
            raise FormatError(f"{path}: header claims {payload} bytes, above the {max_bytes} cap")
        if size != _CODES_HEADER.size + payload:
            raise FormatError(f"{path}: expected {payload} payload bytes, file has "
                              f"{size - _CODES_HEADER.size} (truncated at byte offset "
                              f"{min(size, _CODES_HEADER.size + payload)})")
        codes = np.frombuffer(f.read(payload), dtype=np.uint8).reshape(n, m).copy()
    if codes.size and int(codes.max()) >= h:
        raise FormatError(f"{path}: code index {int(codes.max())} >= h={h}")
    return codes, h


def _meta_path(path):
    return f"{os.fspath(path)}.json"


def save_model(model, path):
    cb = model.codebooks
    has_rot = model.rotation is not None
    with open(path, "wb") as f:
        f.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, KINDS.index(model.kind),
                                   _LAYOUT_IDS[cb.layout], int(has_rot), 0,
                                   cb.d, cb.m, cb.h, cb.width))
        f.write(cb.books.astype("<f4").tobytes())
        if has_rot:
            f.write(np.ascontiguousarray(model.rotation, dtype="<f8").tobytes())
    with open(_meta_path(path), "w") as f:
        json.dump(model.meta, f, indent=1, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def load_model(path, max_bytes=MAX_PAYLOAD):
    size = os.path.getsize(path)
    with open(path, "rb") as f:
        head = f.read(_MODEL_HEADER.size)
        if len(head) < _MODEL_HEADER.size:
            raise FormatError(f"{path}: truncated model header")
        magic, version, kind, layout, has_rot, _, d, m, h, width = _MODEL_HEADER.unpack(head)
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, not a model file")
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: model format version {version}, "
                              f"this reader supports {MODEL_VERSION}")
        if kind >= len(KINDS) or layout not in (0, 1) or has_rot not in (0, 1):
            raise FormatError(f"{path}: invalid kind/layout/rotation flags")
        nbooks = m * h * width * 4
        nrot = d * d * 8 if has_rot else 0
        if nbooks + nrot > max_bytes:
            raise FormatError(f"{path}: header claims {nbooks + nrot} bytes, above the {max_bytes} cap")
        if size != _MODEL_HEADER.size + nbooks + nrot:
            raise FormatError(f"{path}: size {size} does not match header "
                              f"(expected {_MODEL_HEADER.size + nbooks + nrot})")
        books = np.frombuffer(f.read(nbooks), dtype="<f4").reshape(m, h, width).astype(np.float32)
        rot = np.frombuffer(f.read(nrot), dtype="<f8").reshape(d, d).astype(np.float64) if has_rot else None
    meta = {}
    if os.path.exists(_meta_path(path)):
        with open(_meta_path(path)) as f:
            meta = json.load(f)
    layout_name = FULL if layout == 0 else BLOCK
    return Model(KINDS[kind], CodebookStack(books, layout_name, d), rot, meta)
