"""Fixed-layout binary container for embeddings ("CEMB" files).

Layout, all little-endian, no padding:

    header  : magic "CEMB" | u16 version=1 | u8 dtype=1 (f32) |
              u8 normalized | u32 dim | u64 count          (20 bytes)
    record  : u16 id_bytes | id UTF-8 | u16 patch_count |
              (1 + patch_count) * dim  f32 values

The first vector of a record is the global embedding; any following
vectors are patch embeddings in crop order. Text records simply have
patch_count 0. Stores are immutable once written; loaded records are
read-only and shareable across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._util import atomic_write
from .errors import (
    BadMagicError,
    CorruptRecordError,
    DimensionMismatchError,
    DuplicateIdError,
    NormalizationViolationError,
    UnsupportedVersionError,
    ZeroVectorError,
)

MAGIC = b"CEMB"
VERSION = 1
DTYPE_F32 = 1
NORM_TOLERANCE = 1e-4

_HEADER = struct.Struct("<4sHBBIQ")
_U16 = struct.Struct("<H")


@dataclass(frozen=True)
class StoreHeader:
    dim: int
    normalized: int = 0
    count: int = 0
    version: int = VERSION
    dtype: int = DTYPE_F32


@dataclass(frozen=True)
class EmbeddingRecord:
    """One item's vectors: global first, then patches, as (1+n, dim) f32."""

    id: str
    vectors: np.ndarray

    @property
    def patch_count(self) -> int:
        return self.vectors.shape[0] - 1

    @property
    def global_vector(self) -> np.ndarray:
        return self.vectors[0]

    @property
    def patches(self) -> np.ndarray:
        return self.vectors[1:]


def make_record(record_id: str, global_vector, patches=()) -> EmbeddingRecord:
    """Build a record from a global vector and an optional patch list."""
    rows = [np.asarray(global_vector, dtype=np.float32).ravel()]
    rows.extend(np.asarray(p, dtype=np.float32).ravel() for p in patches)
    dims = {row.shape[0] for row in rows}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed vector dims in record {record_id!r}: {sorted(dims)}")
    return EmbeddingRecord(id=record_id, vectors=np.vstack(rows))


def _validate_record(record: EmbeddingRecord, dim: int, normalized: int) -> bytes:
    id_bytes = record.id.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise CorruptRecordError(f"id {record.id[:32]!r}... exceeds 65535 bytes")
    vectors = np.asarray(record.vectors)
    if vectors.ndim != 2 or vectors.shape[1] != dim:
        raise DimensionMismatchError(
            f"record {record.id!r} has shape {vectors.shape}, store dim is {dim}"
        )
    if vectors.shape[0] < 1 or vectors.shape[0] - 1 > 0xFFFF:
        raise CorruptRecordError(f"record {record.id!r} has invalid vector count")
    if not np.all(np.isfinite(vectors)):
        raise CorruptRecordError(f"record {record.id!r} contains non-finite values")
    if normalized:
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise NormalizationViolationError(
                f"record {record.id!r} flagged normalized but has norm "
                f"{norms[int(np.argmax(np.abs(norms - 1.0)))]:.6g}",
                record.id,
            )
    return id_bytes


def write_store(records, header: StoreHeader, path) -> int:
    """Write records in order; returns bytes written.

    header.count is ignored and replaced with len(records). Rewriting the
    same records yields identical bytes.
    """
    records = list(records)
    if header.dim < 1:
        raise DimensionMismatchError("store dim must be >= 1")
    seen = set()
    chunks = [_HEADER.pack(MAGIC, VERSION, DTYPE_F32, 1 if header.normalized else 0,
                           header.dim, len(records))]
    for record in records:
        if record.id in seen:
            raise DuplicateIdError(f"duplicate id {record.id!r} in store", record_id=record.id)
        seen.add(record.id)
        id_bytes = _validate_record(record, header.dim, header.normalized)
        chunks.append(_U16.pack(len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(_U16.pack(record.vectors.shape[0] - 1))
        chunks.append(np.ascontiguousarray(record.vectors, dtype="<f4").tobytes())
    blob = b"".join(chunks)
    with atomic_write(path, "wb") as handle:
        handle.write(blob)
    return len(blob)


def read_store(path):
    """Read and validate a store; returns (StoreHeader, list of records)."""
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"not a CEMB file: leading bytes {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise CorruptRecordError("truncated header", offset=len(data))
    _, version, dtype, normalized, dim, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported store version {version}")
    if dtype != DTYPE_F32:
        raise UnsupportedVersionError(f"unsupported element dtype code {dtype}")
    if dim < 1:
        raise CorruptRecordError("header dim must be >= 1", offset=8)

    records: list[EmbeddingRecord] = []
    seen = set()
    offset = _HEADER.size
    for _ in range(count):
        start = offset
        if offset + 2 > len(data):
            raise CorruptRecordError("truncated id length", offset=start)
        (id_len,) = _U16.unpack_from(data, offset)
        offset += 2
        if offset + id_len > len(data):
            raise CorruptRecordError("truncated id", offset=start)
        try:
            record_id = data[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptRecordError("id is not valid UTF-8", offset=start) from None
        offset += id_len
        if offset + 2 > len(data):
            raise CorruptRecordError("truncated patch count", offset=start)
        (patch_count,) = _U16.unpack_from(data, offset)
        offset += 2
        n_floats = (1 + patch_count) * dim
        if offset + 4 * n_floats > len(data):
            raise CorruptRecordError(f"truncated vectors for id {record_id!r}", offset=start)
        vectors = np.frombuffer(data, dtype="<f4", count=n_floats, offset=offset)
        vectors = vectors.reshape(1 + patch_count, dim)
        offset += 4 * n_floats
        if record_id in seen:
            raise CorruptRecordError(f"duplicate id {record_id!r}", offset=start)
        seen.add(record_id)
        if not np.all(np.isfinite(vectors)):
            raise CorruptRecordError(f"non-finite values in id {record_id!r}", offset=start)
        if normalized:
            norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
            bad = np.abs(norms - 1.0) > NORM_TOLERANCE
            if np.any(bad):
                raise NormalizationViolationError(
                    f"record {record_id!r} has norm {norms[int(np.argmax(bad))]:.6g}",
                    record_id,
                )
        records.append(EmbeddingRecord(id=record_id, vectors=vectors))
    if offset != len(data):
        raise CorruptRecordError(f"{len(data) - offset} trailing bytes", offset=offset)
    header = StoreHeader(dim=dim, normalized=normalized, count=count)
    return header, records


def l2_normalize_store(in_path, out_path) -> int:
    """Rescale every vector to unit norm; writes a normalized=1 store.

    Cosine similarities are unchanged (within f32 rounding), so dot
    products over the output equal cosines over the input.
    """
    header, records = read_store(in_path)
    normalized = []
    for record in records:
        vectors = record.vectors.astype(np.float64)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ZeroVectorError(f"record {record.id!r} contains a zero vector")
        normalized.append(EmbeddingRecord(id=record.id, vectors=(vectors / norms).astype(np.float32)))
    return write_store(normalized, StoreHeader(dim=header.dim, normalized=1), out_path)


def records_by_id(records) -> dict:
    """Index records by id; input order is preserved in dict iteration."""
    return {record.id: record for record in records}
