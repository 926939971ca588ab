"""Exact top-K retrieval over loaded embedding stores, both directions.

Scores are exact (full score vector, no approximate index); ranking is
deterministic: descending score, ties broken by ascending candidate id.
In local mode each image is collapsed at build time to its weighted patch
centroid sum_k w_k * patch_hat_k, so a query is a single matrix-vector
product in either direction; the centroid dot product equals the weighted
sum of patch cosines.

Duplicate candidate rows are detected at build time and share one score
slot per query: BLAS kernels round row-position-dependently, so without
the remap two bitwise-equal candidates could differ by an ulp and dodge
the id tiebreak.

An index is immutable once built and safe to query from many threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .alignment import DEFAULT_ALPHA, MODES, _check_alpha, _unit_rows, weights_for_record
from .errors import (
    DimensionMismatchError,
    KExceedsCorpusError,
    UnknownIdError,
)
from .store import EmbeddingRecord, read_store

DEFAULT_BLOCK = 256


def _duplicate_map(matrix: np.ndarray):
    """Position -> first position holding a bitwise-equal row.

    Returns None when every row is unique (the common case) so callers
    can skip the gather.
    """
    first: dict = {}
    mapping = np.arange(matrix.shape[0], dtype=np.intp)
    has_dups = False
    for pos in range(matrix.shape[0]):
        key = matrix[pos].tobytes()
        if key in first:
            mapping[pos] = first[key]
            has_dups = True
        else:
            first[key] = pos
    return mapping if has_dups else None


@dataclass(frozen=True)
class ScoredPair:
    query_id: str
    candidate_id: str
    score: float
    rank: int


class RetrievalIndex:
    """Loaded text and image corpora with precomputed scoring state."""

    def __init__(self, texts, images, mode: str = "local", alpha=DEFAULT_ALPHA,
                 lenient: bool = False):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.alpha = _check_alpha(alpha)
        self._texts = list(texts)
        self._images = list(images)
        dims = {r.vectors.shape[1] for r in self._texts} | {
            r.vectors.shape[1] for r in self._images
        }
        if len(dims) > 1:
            raise DimensionMismatchError(f"text/image dims differ: {sorted(dims)}")
        self.dim = dims.pop() if dims else 0

        self.text_ids = [r.id for r in self._texts]
        self.image_ids = [r.id for r in self._images]
        self._text_pos = {i: p for p, i in enumerate(self.text_ids)}
        self._image_pos = {i: p for p, i in enumerate(self.image_ids)}

        self._t_hat = self._stack_globals(self._texts, "text store")
        self._g_hat = self._stack_globals(self._images, "image store")
        if mode == "local":
            self.weights = []
            rows = []
            for pos, record in enumerate(self._images):
                if record.patch_count == 0 and lenient:
                    # Patch-free image scored by its global embedding only.
                    warnings.warn(f"image {record.id!r} has no patches; using global score")
                    rows.append(self._g_hat[pos])
                    continue
                w = weights_for_record(record, self.alpha)
                self.weights.append(w)
                rows.append(
                    w.weights @ _unit_rows(np.asarray(record.patches, dtype=np.float64), record.id)
                )
            self._candidates = np.stack(rows) if rows else np.zeros((0, self.dim))
        else:
            self.weights = []
            self._candidates = self._g_hat
        self._cand_dup = _duplicate_map(self._candidates)
        self._text_dup = _duplicate_map(self._t_hat)

    def _stack_globals(self, records, owner):
        if not records:
            return np.zeros((0, self.dim))
        stacked = np.stack([np.asarray(r.global_vector, dtype=np.float64) for r in records])
        return _unit_rows(stacked, owner)

    @property
    def n_texts(self) -> int:
        return len(self._texts)

    @property
    def n_images(self) -> int:
        return len(self._images)

    def text_record(self, text_id: str) -> EmbeddingRecord:
        if text_id not in self._text_pos:
            raise UnknownIdError(f"unknown text id {text_id!r}")
        return self._texts[self._text_pos[text_id]]

    def image_record(self, image_id: str) -> EmbeddingRecord:
        if image_id not in self._image_pos:
            raise UnknownIdError(f"unknown image id {image_id!r}")
        return self._images[self._image_pos[image_id]]

    def t2i_scores(self, query) -> np.ndarray:
        """Score one text query against every image."""
        t_hat = self._query_vector(query, self._text_pos, self._t_hat, "text")
        raw = self._candidates @ t_hat
        if self._cand_dup is not None:
            raw = raw[self._cand_dup]
        return np.clip(raw, -1.0, 1.0)

    def i2t_scores(self, query) -> np.ndarray:
        """Score one image query against every text."""
        if isinstance(query, str):
            if query not in self._image_pos:
                raise UnknownIdError(f"unknown image id {query!r}")
            candidate = self._candidates[self._image_pos[query]]
        elif isinstance(query, EmbeddingRecord):
            candidate = self._record_candidate(query)
        else:
            candidate = _unit_rows(
                np.asarray(query, dtype=np.float64).reshape(1, -1), "image query"
            )[0]
            self._check_dim(candidate)
        raw = self._t_hat @ candidate
        if self._text_dup is not None:
            raw = raw[self._text_dup]
        return np.clip(raw, -1.0, 1.0)

    def scores_for_texts(self, positions) -> np.ndarray:
        """Score matrix for the given text positions against all images."""
        raw = self._t_hat[np.asarray(positions, dtype=np.intp)] @ self._candidates.T
        if self._cand_dup is not None:
            raw = raw[:, self._cand_dup]
        return np.clip(raw, -1.0, 1.0)

    def scores_for_images(self, positions) -> np.ndarray:
        """Score matrix for the given image positions against all texts."""
        raw = self._candidates[np.asarray(positions, dtype=np.intp)] @ self._t_hat.T
        if self._text_dup is not None:
            raw = raw[:, self._text_dup]
        return np.clip(raw, -1.0, 1.0)

    def text_position(self, text_id: str) -> int:
        if text_id not in self._text_pos:
            raise UnknownIdError(f"unknown text id {text_id!r}")
        return self._text_pos[text_id]

    def image_position(self, image_id: str) -> int:
        if image_id not in self._image_pos:
            raise UnknownIdError(f"unknown image id {image_id!r}")
        return self._image_pos[image_id]

    def _record_candidate(self, record: EmbeddingRecord) -> np.ndarray:
        self._check_dim(record.global_vector)
        if self.mode == "global":
            return _unit_rows(
                np.asarray(record.global_vector, dtype=np.float64).reshape(1, -1), record.id
            )[0]
        w = weights_for_record(record, self.alpha)
        return w.weights @ _unit_rows(np.asarray(record.patches, dtype=np.float64), record.id)

    def _query_vector(self, query, positions, matrix, kind) -> np.ndarray:
        if isinstance(query, str):
            if query not in positions:
                raise UnknownIdError(f"unknown {kind} id {query!r}")
            return matrix[positions[query]]
        vector = np.asarray(query, dtype=np.float64).ravel()
        self._check_dim(vector)
        return _unit_rows(vector[None, :], f"{kind} query")[0]

    def _check_dim(self, vector) -> None:
        v = np.asarray(vector).ravel()
        if self.dim and v.shape[0] != self.dim:
            raise DimensionMismatchError(f"query dim {v.shape[0]}, index dim {self.dim}")


def build_index(texts_path, images_path, mode: str = "local", alpha=DEFAULT_ALPHA,
                lenient: bool = False) -> RetrievalIndex:
    """Load both stores and build an index; dims must agree."""
    _, texts = read_store(texts_path)
    _, images = read_store(images_path)
    return RetrievalIndex(texts, images, mode=mode, alpha=alpha, lenient=lenient)


def rank_candidates(scores, candidate_ids, k: int):
    """Indices of the top-k candidates: score descending, id ascending."""
    ids = np.asarray(candidate_ids, dtype=object)
    order = np.lexsort((ids, -np.asarray(scores, dtype=np.float64)))
    return order[:k]


def _resolve_k(k: int, corpus_size: int, lenient: bool) -> int:
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if k > corpus_size:
        if not lenient:
            raise KExceedsCorpusError(f"K={k} exceeds corpus size {corpus_size}")
        warnings.warn(f"K={k} clamped to corpus size {corpus_size}", stacklevel=3)
        return corpus_size
    return k


def _pairs(query_id, scores, ids, k):
    top = rank_candidates(scores, ids, k)
    return [
        ScoredPair(query_id=query_id, candidate_id=ids[idx], score=float(scores[idx]), rank=rank)
        for rank, idx in enumerate(top, start=1)
    ]


def query_t2i(index: RetrievalIndex, query, k: int, lenient: bool = False):
    """Top-k images for a text query (id or raw embedding)."""
    k = _resolve_k(k, index.n_images, lenient)
    scores = index.t2i_scores(query)
    query_id = query if isinstance(query, str) else "<query>"
    return _pairs(query_id, scores, index.image_ids, k)


def query_i2t(index: RetrievalIndex, query, k: int, lenient: bool = False):
    """Top-k texts for an image query (id, record, or global embedding)."""
    k = _resolve_k(k, index.n_texts, lenient)
    scores = index.i2t_scores(query)
    if isinstance(query, str):
        query_id = query
    elif isinstance(query, EmbeddingRecord):
        query_id = query.id
    else:
        query_id = "<query>"
    return _pairs(query_id, scores, index.text_ids, k)
