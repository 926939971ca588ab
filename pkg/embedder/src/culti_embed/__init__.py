"""Offline corpus embedder producing CEMB text/image stores."""

from .cropper import CropBox, CropSpec, sample_crops
from .encoder import LiteEncoder, load_encoder
from .errors import (
    EmbedderError,
    EncoderLoadError,
    ManifestFormatError,
    MissingImageFileError,
)
from .manifest import ManifestEntry, read_manifest
from .pipeline import EmbedSummary, embed_corpus
from .store import write_store

__all__ = [
    "CropBox",
    "CropSpec",
    "EmbedSummary",
    "EmbedderError",
    "EncoderLoadError",
    "LiteEncoder",
    "ManifestEntry",
    "ManifestFormatError",
    "MissingImageFileError",
    "embed_corpus",
    "load_encoder",
    "read_manifest",
    "sample_crops",
    "write_store",
]

__version__ = "0.1.0"
