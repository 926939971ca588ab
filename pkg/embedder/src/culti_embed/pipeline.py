"""Corpus embedding: manifest in, paired CEMB stores out.

Records are processed single-threaded in manifest order so output files
are byte-reproducible. Vector content is still order-independent because
every record's crop stream is keyed by (seed, id), not by position.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .cropper import CropSpec, sample_crops
from .encoder import LiteEncoder
from .errors import MissingImageFileError
from .manifest import read_manifest
from .store import write_store


@dataclass(frozen=True)
class EmbedSummary:
    n_records: int
    n_patches: int
    dim: int
    text_bytes: int
    image_bytes: int


def _load_image(manifest_dir: str, entry) -> Image.Image:
    path = entry.image_path
    if not os.path.isabs(path):
        path = os.path.join(manifest_dir, path)
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except FileNotFoundError:
        raise MissingImageFileError(
            f"image file not found for record {entry.id!r}: {path}",
            record_id=entry.id,
        ) from None
    except UnidentifiedImageError as exc:
        raise MissingImageFileError(
            f"unreadable image for record {entry.id!r}: {path} ({exc})",
            record_id=entry.id,
        ) from None


def embed_corpus(
    manifest_path,
    crop_spec: CropSpec,
    encoder: LiteEncoder,
    out_texts,
    out_images,
) -> EmbedSummary:
    """Embed every manifest record; returns counts and bytes written."""
    entries = read_manifest(manifest_path)
    manifest_dir = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))

    text_records = []
    image_records = []
    for entry in entries:
        image = _load_image(manifest_dir, entry)
        vectors = [encoder.embed_image(image)]
        for box in sample_crops(entry.id, image.width, image.height, crop_spec):
            vectors.append(encoder.embed_image(image.crop(box.as_tuple())))
        image_records.append((entry.id, np.stack(vectors)))
        text_records.append((entry.id, encoder.embed_text(entry.description)[None, :]))

    text_bytes = write_store(out_texts, text_records, encoder.dim)
    image_bytes = write_store(out_images, image_records, encoder.dim)
    return EmbedSummary(
        n_records=len(entries),
        n_patches=crop_spec.n_patches,
        dim=encoder.dim,
        text_bytes=text_bytes,
        image_bytes=image_bytes,
    )
