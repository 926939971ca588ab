"""Weighted local patch alignment.

An image is represented by a global embedding plus patch embeddings. Each
patch gets a weight from a softmax over its similarity to its own image's
global embedding, scaled by alpha; the final text-image score is the
weight-averaged patch-text cosine. Weights depend only on the image, so
they are computed once per image and reused across all query texts.

Alpha controls sharpness: 0 gives the unweighted patch mean, large values
select the single patch most aligned with the global embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_math import stable_softmax
from .errors import (
    DimensionMismatchError,
    EmptyPatchSetError,
    MissingPatchesError,
    NonFiniteInputError,
    ZeroVectorError,
)

DEFAULT_ALPHA = 1.02
MODES = ("local", "global")


@dataclass(frozen=True)
class PatchWeights:
    """Per-patch softmax weights for one image; sums to 1."""

    image_id: str
    weights: np.ndarray
    alpha: float


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise NonFiniteInputError("alpha must be finite")
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return alpha


def _unit_rows(matrix: np.ndarray, owner: str) -> np.ndarray:
    """L2-normalize rows, rejecting zero and non-finite rows."""
    m = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NonFiniteInputError(f"non-finite values in {owner}")
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVectorError(f"zero vector in {owner}")
    return m / norms


def patch_weights(global_vector, patches, alpha, image_id: str = "") -> PatchWeights:
    """Softmax over alpha-scaled patch-to-global cosines."""
    alpha = _check_alpha(alpha)
    p = np.atleast_2d(np.asarray(patches, dtype=np.float64))
    if p.shape[0] == 0 or p.size == 0:
        raise EmptyPatchSetError("patch_weights needs at least one patch")
    g = np.asarray(global_vector, dtype=np.float64).ravel()
    if p.shape[1] != g.shape[0]:
        raise DimensionMismatchError(
            f"patch dim {p.shape[1]} vs global dim {g.shape[0]}"
        )
    g_hat = _unit_rows(g[None, :], f"global vector of {image_id or 'image'}")[0]
    p_hat = _unit_rows(p, f"patches of {image_id or 'image'}")
    cosines = np.clip(p_hat @ g_hat, -1.0, 1.0)
    return PatchWeights(image_id=image_id, weights=stable_softmax(alpha * cosines), alpha=alpha)


def weights_for_record(record, alpha) -> PatchWeights:
    """Patch weights for a loaded store record."""
    if record.patch_count == 0:
        raise MissingPatchesError(f"record {record.id!r} has no patches", record.id)
    return patch_weights(record.global_vector, record.patches, alpha, image_id=record.id)


def local_aligned_score(text_embedding, global_vector, patches, alpha) -> float:
    """Weighted sum of patch-text cosines; lies in [-1, 1]."""
    w = patch_weights(global_vector, patches, alpha).weights
    p = np.atleast_2d(np.asarray(patches, dtype=np.float64))
    t = np.asarray(text_embedding, dtype=np.float64).ravel()
    if t.shape[0] != p.shape[1]:
        raise DimensionMismatchError(f"text dim {t.shape[0]} vs patch dim {p.shape[1]}")
    t_hat = _unit_rows(t[None, :], "text embedding")[0]
    p_hat = _unit_rows(p, "patches")
    cosines = np.clip(p_hat @ t_hat, -1.0, 1.0)
    return float(np.clip(float(w @ cosines), -1.0, 1.0))


def score_matrix(texts, images, alpha=DEFAULT_ALPHA, mode: str = "local") -> np.ndarray:
    """Score every text against every image; rows are texts.

    In global mode, entry (t, i) is the cosine of the two global
    embeddings. In local mode it is the weighted patch score; an image
    with no stored patches is an error (a silent global fallback could
    mask an embedder bug upstream).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    alpha = _check_alpha(alpha)
    texts = list(texts)
    images = list(images)
    if not texts or not images:
        return np.zeros((len(texts), len(images)), dtype=np.float64)

    dims = {r.vectors.shape[1] for r in texts} | {r.vectors.shape[1] for r in images}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed embedding dims across stores: {sorted(dims)}")

    t_hat = _unit_rows(
        np.stack([np.asarray(r.global_vector, dtype=np.float64) for r in texts]), "text store"
    )
    if mode == "global":
        g_hat = _unit_rows(
            np.stack([np.asarray(r.global_vector, dtype=np.float64) for r in images]),
            "image store",
        )
        return np.clip(t_hat @ g_hat.T, -1.0, 1.0)

    for record in images:
        if record.patch_count == 0:
            raise MissingPatchesError(f"record {record.id!r} has no patches", record.id)

    # One flat patch matrix for the whole corpus keeps the text-patch
    # product a single BLAS call; per-image weight blocks fold it back.
    all_patches = _unit_rows(
        np.concatenate([np.asarray(r.patches, dtype=np.float64) for r in images]), "image patches"
    )
    text_patch = np.clip(t_hat @ all_patches.T, -1.0, 1.0)

    out = np.empty((len(texts), len(images)), dtype=np.float64)
    start = 0
    for col, record in enumerate(images):
        stop = start + record.patch_count
        w = patch_weights(record.global_vector, record.patches, alpha, image_id=record.id).weights
        out[:, col] = text_patch[:, start:stop] @ w
        start = stop
    return np.clip(out, -1.0, 1.0)
