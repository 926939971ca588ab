"""Writer for the CEMB embedding-store interchange format.

Layout (all little-endian):

* header ``<4sHBBIQ``: magic ``CEMB``, version 1, dtype code 1 (float32),
  normalized flag, vector dim (u32), record count (u64)
* per record: u16 id byte length, UTF-8 id, u16 patch count, then
  ``1 + patch_count`` vectors of ``dim`` float32 values, global first
"""

from __future__ import annotations

import struct

import numpy as np

_HEADER = struct.Struct("<4sHBBIQ")
_U16 = struct.Struct("<H")

MAGIC = b"CEMB"
VERSION = 1
DTYPE_F32 = 1


def write_store(path, records, dim: int, normalized: bool = False) -> int:
    """Write ``(id, vectors)`` pairs; returns bytes written.

    ``vectors`` is a float32 array of shape (1 + patch_count, dim).
    """
    chunks = [
        _HEADER.pack(MAGIC, VERSION, DTYPE_F32, 1 if normalized else 0, dim, len(records))
    ]
    for record_id, vectors in records:
        arr = np.ascontiguousarray(vectors, dtype="<f4")
        if arr.ndim != 2 or arr.shape[1] != dim or arr.shape[0] < 1:
            raise ValueError(
                f"record {record_id!r}: expected (1 + patches, {dim}) vectors, "
                f"got shape {arr.shape}"
            )
        id_bytes = record_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise ValueError(f"record id too long: {len(id_bytes)} bytes")
        chunks.append(_U16.pack(len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(_U16.pack(arr.shape[0] - 1))
        chunks.append(arr.tobytes())
    blob = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)
