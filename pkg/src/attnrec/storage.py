"""Binary cache and checkpoint formats.

All integers are little-endian. Three matrix cache layouts share the same
header convention (4 magic bytes, then a version byte):

interaction cache (magic ``RXIM``, version 1)
    u32 n_users, u32 n_articles, u64 n_pairs, then n_pairs records of
    (u32 user, u32 article) sorted ascending by (user, article).

content cache (magic ``RXCM``, version 1)
    u32 n_rows, u32 n_cols, u64 nnz, (n_rows+1) x u64 row pointers,
    nnz x u32 column indices, nnz x f64 values.

tag cache (magic ``RXTM``, version 1)
    u32 n_rows, u32 n_cols, u64 nnz, (n_rows+1) x u64 row pointers,
    nnz x u32 column indices. Values are implicitly 1.

tensor container (magic ``RXTN``, version 1)
    u32 metadata length, metadata as UTF-8 JSON (sorted keys), u32 tensor
    count, then per tensor: u16 name length, name UTF-8, u8 ndim,
    ndim x u32 shape, and the row-major payload as little-endian f32.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import DataError

MAGIC_INTERACTIONS = b"RXIM"
MAGIC_CONTENT = b"RXCM"
MAGIC_TAGS = b"RXTM"
MAGIC_TENSORS = b"RXTN"
VERSION = 1

_U8 = np.dtype("<u1")
_U16 = np.dtype("<u2")
_U32 = np.dtype("<u4")
_U64 = np.dtype("<u8")
_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")


class _Reader:
    """Cursor over a byte buffer with typed reads."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, dtype, count: int) -> np.ndarray:
        nbytes = dtype.itemsize * count
        if self.pos + nbytes > len(self.data):
            raise DataError(f"{self.path}: truncated cache file")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += nbytes
        return out

    def scalar(self, dtype) -> int:
        return int(self.take(dtype, 1)[0])

    def raw(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.data):
            raise DataError(f"{self.path}: truncated cache file")
        out = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out


def _check_header(reader: _Reader, magic: bytes):
    got = reader.raw(4)
    if got != magic:
        raise DataError(
            f"{reader.path}: bad magic {got!r}, expected {magic!r}"
        )
    version = reader.scalar(_U8)
    if version != VERSION:
        raise DataError(f"{reader.path}: unsupported version {version}")


def write_interactions(path, n_users: int, n_articles: int,
                       users: np.ndarray, articles: np.ndarray):
    """Write sorted (user, article) pairs. Pairs must already be deduplicated."""
    users = np.asarray(users, dtype=np.int64)
    articles = np.asarray(articles, dtype=np.int64)
    order = np.lexsort((articles, users))
    parts = [
        MAGIC_INTERACTIONS,
        np.array([VERSION], dtype=_U8).tobytes(),
        np.array([n_users, n_articles], dtype=_U32).tobytes(),
        np.array([len(users)], dtype=_U64).tobytes(),
        np.ascontiguousarray(
            np.stack([users[order], articles[order]], axis=1).astype(_U32)
        ).tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_interactions(path):
    """Return (n_users, n_articles, users, articles)."""
    reader = _Reader(Path(path).read_bytes(), path)
    _check_header(reader, MAGIC_INTERACTIONS)
    n_users = reader.scalar(_U32)
    n_articles = reader.scalar(_U32)
    n_pairs = reader.scalar(_U64)
    flat = reader.take(_U32, 2 * n_pairs).reshape(n_pairs, 2)
    return n_users, n_articles, flat[:, 0].copy(), flat[:, 1].copy()


def _write_csr(path, magic: bytes, matrix: sparse.csr_matrix, with_values: bool):
    matrix = matrix.tocsr()
    matrix.sort_indices()
    parts = [
        magic,
        np.array([VERSION], dtype=_U8).tobytes(),
        np.array(matrix.shape, dtype=_U32).tobytes(),
        np.array([matrix.nnz], dtype=_U64).tobytes(),
        matrix.indptr.astype(_U64).tobytes(),
        matrix.indices.astype(_U32).tobytes(),
    ]
    if with_values:
        parts.append(matrix.data.astype(_F64).tobytes())
    Path(path).write_bytes(b"".join(parts))


def _read_csr(path, magic: bytes, with_values: bool) -> sparse.csr_matrix:
    reader = _Reader(Path(path).read_bytes(), path)
    _check_header(reader, magic)
    n_rows = reader.scalar(_U32)
    n_cols = reader.scalar(_U32)
    nnz = reader.scalar(_U64)
    indptr = reader.take(_U64, n_rows + 1).astype(np.int64)
    indices = reader.take(_U32, nnz).astype(np.int32)
    if with_values:
        data = reader.take(_F64, nnz).astype(np.float64)
    else:
        data = np.ones(nnz, dtype=np.float64)
    return sparse.csr_matrix((data, indices, indptr), shape=(n_rows, n_cols))


def write_content(path, matrix: sparse.csr_matrix):
    _write_csr(path, MAGIC_CONTENT, matrix, with_values=True)


def read_content(path) -> sparse.csr_matrix:
    return _read_csr(path, MAGIC_CONTENT, with_values=True)


def write_tags(path, matrix: sparse.csr_matrix):
    _write_csr(path, MAGIC_TAGS, matrix, with_values=False)


def read_tags(path) -> sparse.csr_matrix:
    return _read_csr(path, MAGIC_TAGS, with_values=False)


def write_tensors(path, tensors: dict, meta: dict | None = None):
    """Write named float tensors plus a JSON metadata record.

    Payloads are stored as 32-bit floats; callers lose precision beyond f32.
    """
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [
        MAGIC_TENSORS,
        np.array([VERSION], dtype=_U8).tobytes(),
        np.array([len(meta_bytes)], dtype=_U32).tobytes(),
        meta_bytes,
        np.array([len(tensors)], dtype=_U32).tobytes(),
    ]
    # Sorted by name so identical contents always produce identical bytes.
    for name in sorted(tensors):
        array = np.asarray(tensors[name], dtype=np.float64)
        name_bytes = name.encode("utf-8")
        parts.append(np.array([len(name_bytes)], dtype=_U16).tobytes())
        parts.append(name_bytes)
        parts.append(np.array([array.ndim], dtype=_U8).tobytes())
        parts.append(np.array(array.shape, dtype=_U32).tobytes())
        parts.append(np.ascontiguousarray(array, dtype=_F32).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_tensors(path):
    """Return (tensors, meta); tensor payloads come back as float64 arrays."""
    reader = _Reader(Path(path).read_bytes(), path)
    _check_header(reader, MAGIC_TENSORS)
    meta_len = reader.scalar(_U32)
    meta = json.loads(reader.raw(meta_len).decode("utf-8")) if meta_len else {}
    count = reader.scalar(_U32)
    tensors = {}
    for _ in range(count):
        name_len = reader.scalar(_U16)
        name = reader.raw(name_len).decode("utf-8")
        ndim = reader.scalar(_U8)
        shape = tuple(reader.take(_U32, ndim).astype(int))
        size = int(np.prod(shape)) if ndim else 1
        data = reader.take(_F32, size).astype(np.float64)
        tensors[name] = data.reshape(shape)
    return tensors, meta
