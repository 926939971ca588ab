"""Shared fixtures: synthetic images, manifests, and a raw CEMB reader.

The reader is written straight from the documented byte layout rather
than importing any store code, so it cross-checks the writer instead of
mirroring it.
"""

import json
import shutil
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

HEADER = struct.Struct("<4sHBBIQ")
U16 = struct.Struct("<H")

CATEGORY_SOURCE = {
    "pattern": "silk",
    "original_textile": "silk",
    "cropped_pattern": "silk",
    "mural": "dunhuang",
}


def read_cemb(path):
    data = Path(path).read_bytes()
    magic, version, dtype, normalized, dim, count = HEADER.unpack_from(data, 0)
    assert magic == b"CEMB"
    assert version == 1
    assert dtype == 1
    offset = HEADER.size
    records = []
    for _ in range(count):
        (id_len,) = U16.unpack_from(data, offset)
        offset += 2
        record_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        (patch_count,) = U16.unpack_from(data, offset)
        offset += 2
        n_values = (1 + patch_count) * dim
        vectors = np.frombuffer(data, dtype="<f4", count=n_values, offset=offset)
        offset += 4 * n_values
        records.append((record_id, vectors.reshape(1 + patch_count, dim).copy()))
    assert offset == len(data), "trailing bytes after last record"
    return {"normalized": normalized, "dim": dim, "count": count}, records


def make_image(path, width, height, seed):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


def manifest_obj(i, image_name, category="pattern"):
    return {
        "id": f"item{i:04d}",
        "title": f"Item {i}",
        "description": f"A woven motif numbered {i} with interlocking vines",
        "image_path": image_name,
        "category": category,
        "volume": "v1",
        "source": CATEGORY_SOURCE[category],
    }


def build_corpus(root: Path, n: int, category="pattern"):
    """n described images under root; returns the manifest path."""
    sizes = [(64, 48), (48, 64), (37, 53), (80, 80), (51, 33)]
    lines = []
    for i in range(n):
        w, h = sizes[i % len(sizes)]
        name = f"img{i:04d}.png"
        make_image(root / name, w, h, seed=1000 + i)
        lines.append(json.dumps(manifest_obj(i, name, category)))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def run_laclip(*args):
    exe = shutil.which("laclip")
    cmd = [exe, *args] if exe else [sys.executable, "-m", "laclip.cli", *args]
    return subprocess.run(cmd, capture_output=True, text=True)
