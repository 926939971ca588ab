"""Contrastive training of per-modality linear projection heads.

Full encoder fine-tuning is out of reach at desk scale, so the trainable
surface here is one d x d matrix per modality applied to frozen
embeddings, plus the temperature. The loss is exactly the bidirectional
contrastive objective from core_math, with in-batch negatives; gradients
are chained analytically through the projections (no autodiff).

Heads serialize to a small "CHED" binary: a 12-byte header (magic,
u16 version=1, u8 dtype=1, u8 reserved) plus dim, then the text matrix,
the image matrix, and tau, all little-endian f32. Loading therefore
rounds trained f64 weights to f32.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import SplitMix64
from ._util import atomic_write
from .core_math import TAU_MIN, Temperature, total_loss_grad
from .errors import (
    BadMagicError,
    BatchTooSmallError,
    CorruptRecordError,
    DimensionMismatchError,
    NonFiniteInputError,
    UnsupportedVersionError,
    ZeroVectorError,
)
from .store import EmbeddingRecord, StoreHeader, read_store, write_store

HEAD_MAGIC = b"CHED"
HEAD_VERSION = 1
_HEAD_HEADER = struct.Struct("<4sHBBI")

OPTIMIZERS = ("adam", "sgd")
MODALITIES = ("text", "image")


@dataclass(frozen=True)
class ProjectionHead:
    """Two square projection matrices plus the shared temperature."""

    w_text: np.ndarray
    w_image: np.ndarray
    tau: Temperature = Temperature()

    def __post_init__(self):
        wt = np.asarray(self.w_text, dtype=np.float64)
        wi = np.asarray(self.w_image, dtype=np.float64)
        for name, w in (("w_text", wt), ("w_image", wi)):
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise DimensionMismatchError(f"{name} must be square, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise NonFiniteInputError(f"{name} contains non-finite entries")
        if wt.shape != wi.shape:
            raise DimensionMismatchError(
                f"head matrices disagree on dim: {wt.shape} vs {wi.shape}"
            )
        object.__setattr__(self, "w_text", wt)
        object.__setattr__(self, "w_image", wi)

    @property
    def dim(self) -> int:
        return self.w_text.shape[0]

    @classmethod
    def identity(cls, dim: int, tau: float = 1.0, learnable_tau: bool = True):
        return cls(np.eye(dim), np.eye(dim), Temperature(tau, learnable_tau))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults follow the published fine-tuning recipe.

    learning_rate 0 is accepted and performs a no-op update, which is
    handy for dry runs.
    """

    batch_size: int = 32
    learning_rate: float = 5e-5
    epochs: int = 3
    seed: int = 42
    optimizer: str = "adam"
    tau_min: float = TAU_MIN
    train_heads: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise BatchTooSmallError("batch_size must be >= 2 for in-batch negatives")
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.tau_min < TAU_MIN:
            raise ValueError(f"tau_min below the supported floor {TAU_MIN}")


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def update(self, params: dict, grads: dict) -> dict:
        return {k: params[k] - self.lr * grads[k] for k in params}


class _Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def update(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for key in params:
            g = grads[key]
            m = self.beta1 * self.m.get(key, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(key, 0.0) + (1 - self.beta2) * g * g
            self.m[key] = m
            self.v[key] = v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            out[key] = params[key] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def make_optimizer(config: TrainConfig):
    return _Adam(config.learning_rate) if config.optimizer == "adam" else _Sgd(config.learning_rate)


def _batch(array, name: str) -> np.ndarray:
    a = np.asarray(array, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-D (N, d) batch")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInputError(f"{name} contains non-finite values")
    return a


def forward(head: ProjectionHead, text_batch, image_batch) -> np.ndarray:
    """Cosine matrix of projected texts (rows) against projected images."""
    T = _batch(text_batch, "text batch")
    V = _batch(image_batch, "image batch")
    if T.shape[1] != head.dim or V.shape[1] != head.dim:
        raise DimensionMismatchError(
            f"batch dims ({T.shape[1]}, {V.shape[1]}) do not match head dim {head.dim}"
        )
    pt = T @ head.w_text.T
    pv = V @ head.w_image.T
    nt = np.linalg.norm(pt, axis=1, keepdims=True)
    nv = np.linalg.norm(pv, axis=1, keepdims=True)
    if np.any(nt == 0.0) or np.any(nv == 0.0):
        raise ZeroVectorError("projection collapsed an embedding to zero")
    return np.clip((pt / nt) @ (pv / nv).T, -1.0, 1.0)


@dataclass(frozen=True)
class StepGradients:
    loss: float
    w_text: np.ndarray
    w_image: np.ndarray
    tau: float


def step_gradients(head: ProjectionHead, text_batch, image_batch) -> StepGradients:
    """Loss and analytic gradients w.r.t. both matrices and tau.

    With projections p = W t, the embedding-space gradient G maps back to
    the matrix as dL/dW = G^T @ T (rows of T are the raw inputs).
    """
    T = _batch(text_batch, "text batch")
    V = _batch(image_batch, "image batch")
    if T.shape[1] != head.dim or V.shape[1] != head.dim:
        raise DimensionMismatchError(
            f"batch dims ({T.shape[1]}, {V.shape[1]}) do not match head dim {head.dim}"
        )
    grads = total_loss_grad(T @ head.w_text.T, V @ head.w_image.T, head.tau.value)
    return StepGradients(
        loss=grads.loss,
        w_text=grads.texts.T @ T,
        w_image=grads.images.T @ V,
        tau=grads.tau,
    )


def train_step(head: ProjectionHead, text_batch, image_batch, config: TrainConfig,
               optimizer=None):
    """One optimizer update; returns (new head, loss at the old head).

    Pass the same optimizer object across steps to keep its moment state;
    omitting it runs a fresh single-shot update. tau is clamped to
    config.tau_min after the update and is frozen when head.tau is marked
    not learnable; config.train_heads=False freezes both matrices.
    """
    if optimizer is None:
        optimizer = make_optimizer(config)
    grads = step_gradients(head, text_batch, image_batch)
    params = {"w_text": head.w_text, "w_image": head.w_image, "tau": np.float64(head.tau.value)}
    raw = {
        "w_text": grads.w_text if config.train_heads else np.zeros_like(grads.w_text),
        "w_image": grads.w_image if config.train_heads else np.zeros_like(grads.w_image),
        "tau": np.float64(grads.tau if head.tau.learnable else 0.0),
    }
    updated = optimizer.update(params, raw)
    new_tau = Temperature(max(config.tau_min, float(updated["tau"])), head.tau.learnable)
    new_head = ProjectionHead(updated["w_text"], updated["w_image"], new_tau)
    return new_head, grads.loss


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    val_r1: Optional[float] = None


def _diagonal_r1(scores: np.ndarray) -> float:
    """Percent of rows whose diagonal entry ranks first (ties by index)."""
    n = scores.shape[0]
    hits = 0
    for i in range(n):
        row = scores[i]
        gold = row[i]
        higher = int(np.sum(row > gold))
        tied_before = int(np.sum((row == gold) & (np.arange(n) < i)))
        if higher + tied_before == 0:
            hits += 1
    return 100.0 * hits / n


def train(head_init: ProjectionHead, train_texts, train_images, config: TrainConfig,
          val_texts=None, val_images=None):
    """Epoch loop with seeded shuffling; returns (final head, history).

    Batches are contiguous slices of a splitmix64-shuffled index list,
    reshuffled every epoch from the single config seed, so identical
    (seed, config, data) reruns produce bit-identical heads and history.
    A trailing slice of size 1 is skipped (no negatives to contrast).
    History records each epoch's mean step loss and, when a validation
    set is given, the text-to-image R@1 over it with diagonal gold.
    """
    T = _batch(train_texts, "train texts")
    V = _batch(train_images, "train images")
    if T.shape != V.shape:
        raise DimensionMismatchError(f"train batch shapes differ: {T.shape} vs {V.shape}")
    if T.shape[0] < 2:
        raise BatchTooSmallError("training needs at least 2 pairs")
    has_val = val_texts is not None and val_images is not None

    head = head_init
    optimizer = make_optimizer(config)
    stream = SplitMix64(config.seed)
    history: list[EpochStats] = []
    n = T.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = list(range(n))
        stream.shuffle(order)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            head, loss = train_step(head, T[idx], V[idx], config, optimizer)
            losses.append(loss)
        val_r1 = _diagonal_r1(forward(head, val_texts, val_images)) if has_val else None
        history.append(EpochStats(epoch=epoch, loss=float(np.mean(losses)), val_r1=val_r1))
    return head, history


def apply_head(head: ProjectionHead, records, modality: str):
    """Project every vector of every record through one modality matrix."""
    if modality not in MODALITIES:
        raise ValueError(f"modality must be one of {MODALITIES}")
    w = head.w_text if modality == "text" else head.w_image
    out = []
    for record in records:
        vectors = np.asarray(record.vectors, dtype=np.float64)
        if vectors.shape[1] != head.dim:
            raise DimensionMismatchError(
                f"record {record.id!r} dim {vectors.shape[1]} vs head dim {head.dim}"
            )
        out.append(EmbeddingRecord(id=record.id, vectors=(vectors @ w.T).astype(np.float32)))
    return out


def apply_head_to_store(head: ProjectionHead, in_path, out_path, modality: str) -> int:
    """File-level apply_head; output store is unnormalized."""
    _, records = read_store(in_path)
    projected = apply_head(head, records, modality)
    return write_store(projected, StoreHeader(dim=head.dim, normalized=0), out_path)


def save_head(head: ProjectionHead, path) -> int:
    """Serialize to the CHED layout; returns bytes written."""
    blob = _HEAD_HEADER.pack(HEAD_MAGIC, HEAD_VERSION, 1, 0, head.dim)
    blob += np.ascontiguousarray(head.w_text, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(head.w_image, dtype="<f4").tobytes()
    blob += struct.pack("<f", head.tau.value)
    with atomic_write(path, "wb") as handle:
        handle.write(blob)
    return len(blob)


def load_head(path) -> ProjectionHead:
    with open(path, "rb") as handle:
        data = handle.read()
    if len(data) < 4 or data[:4] != HEAD_MAGIC:
        raise BadMagicError(f"not a CHED file: leading bytes {data[:4]!r}")
    if len(data) < _HEAD_HEADER.size:
        raise CorruptRecordError("truncated head header", offset=len(data))
    _, version, dtype, _, dim = _HEAD_HEADER.unpack_from(data, 0)
    if version != HEAD_VERSION:
        raise UnsupportedVersionError(f"unsupported head version {version}")
    if dtype != 1:
        raise UnsupportedVersionError(f"unsupported head dtype code {dtype}")
    expected = _HEAD_HEADER.size + 2 * 4 * dim * dim + 4
    if len(data) != expected:
        raise CorruptRecordError(
            f"head file is {len(data)} bytes, layout implies {expected}", offset=len(data)
        )
    offset = _HEAD_HEADER.size
    w_text = np.frombuffer(data, dtype="<f4", count=dim * dim, offset=offset)
    offset += 4 * dim * dim
    w_image = np.frombuffer(data, dtype="<f4", count=dim * dim, offset=offset)
    offset += 4 * dim * dim
    (tau,) = struct.unpack_from("<f", data, offset)
    return ProjectionHead(
        w_text.reshape(dim, dim).astype(np.float64),
        w_image.reshape(dim, dim).astype(np.float64),
        Temperature(float(tau)),
    )
