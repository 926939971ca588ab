"""Deterministic offline encoders.

The ``lite-<dim>`` family needs no downloaded weights: images are resized
to a small fixed resolution and pushed through a frozen Gaussian random
projection whose matrix is derived from the encoder name alone; texts
are hashed byte-trigram by byte-trigram into signed buckets. Both sides
are fully reproducible across machines, which is what the downstream
store diffing and retrieval tests rely on. Swapping in a heavier encoder
is a matter of registering another builder under a new name.
"""

from __future__ import annotations

import math
import re

import numpy as np
from PIL import Image

from ._rng import SplitMix64, fnv1a64
from .errors import EncoderLoadError

_LITE_RESOLUTION = 24
_LITE_NAME = re.compile(r"^lite-(\d+)$")
_MAX_DIM = 4096


def _gaussian_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """Box-Muller over a splitmix64 stream; numpy's generators stay out
    so the matrix is pinned independently of numpy's stream policy."""
    stream = SplitMix64(seed)
    out = np.empty(rows * cols, dtype=np.float64)
    i = 0
    total = out.size
    while i < total:
        u1 = stream.unit()
        while u1 == 0.0:
            u1 = stream.unit()
        u2 = stream.unit()
        r = math.sqrt(-2.0 * math.log(u1))
        out[i] = r * math.cos(2.0 * math.pi * u2)
        i += 1
        if i < total:
            out[i] = r * math.sin(2.0 * math.pi * u2)
            i += 1
    return out.reshape(rows, cols) / math.sqrt(cols)


class LiteEncoder:
    """Random-projection image tower plus trigram-hash text tower."""

    def __init__(self, name: str, dim: int):
        self.name = name
        self.dim = dim
        self.resolution = _LITE_RESOLUTION
        n_features = 3 * self.resolution * self.resolution + 1
        self._projection = _gaussian_matrix(
            dim, n_features, fnv1a64(name.encode("utf-8"))
        )

    def embed_image(self, image: Image.Image) -> np.ndarray:
        resized = image.convert("RGB").resize(
            (self.resolution, self.resolution), Image.Resampling.BILINEAR
        )
        pixels = np.asarray(resized, dtype=np.float64).reshape(-1) / 255.0
        # Trailing 1.0 keeps all-black frames off the zero vector.
        features = np.concatenate([pixels, [1.0]])
        return (self._projection @ features).astype(np.float32)

    def embed_text(self, text: str) -> np.ndarray:
        data = text.encode("utf-8")
        grams = (
            [data[i : i + 3] for i in range(len(data) - 2)] if len(data) >= 3 else [data]
        )
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in grams:
            h = fnv1a64(gram)
            sign = -1.0 if (h >> 63) & 1 else 1.0
            vec[h % self.dim] += sign
        return (vec / math.sqrt(len(grams))).astype(np.float32)


def load_encoder(name: str) -> LiteEncoder:
    match = _LITE_NAME.match(name)
    if not match:
        raise EncoderLoadError(
            f"unknown encoder {name!r}; available: lite-<dim> (e.g. lite-32)"
        )
    dim = int(match.group(1))
    if not (1 <= dim <= _MAX_DIM):
        raise EncoderLoadError(f"encoder dim must be in [1, {_MAX_DIM}], got {dim}")
    return LiteEncoder(name, dim)
