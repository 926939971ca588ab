"""Numerical kernels for bidirectional contrastive alignment.

Cosine similarity, a numerically stable softmax, the temperature-scaled
bidirectional InfoNCE loss, and hand-derived analytic gradients of that
loss with respect to the raw embeddings and the temperature.

Conventions used throughout:

* A similarity matrix ``S`` holds cosines with queries along rows.
  ``loss_i2t`` applies a softmax across each row of ``S`` (row i holds the
  similarities of image i against every text, the matched text sits on the
  diagonal); ``loss_t2i`` is the identical computation on ``S.T``. Because
  cosine is symmetric, the total loss is unchanged if the caller adopts
  the opposite row convention.
* The softmax denominator includes the positive (diagonal) term. This is
  the standard InfoNCE form; dropping the positive would make the loss
  unbounded below.
* All internal arithmetic is float64 even when inputs arrive as float32;
  results are plain Python floats or float64 arrays.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BatchTooSmallError,
    DimensionMismatchError,
    EmptyInputError,
    NonFiniteInputError,
    NonSquareMatrixError,
    ZeroVectorError,
)

# Lower clamp for the learnable temperature; updates below this are clipped
# to keep exp(S/tau) from diverging.
TAU_MIN = 1e-2


@dataclass(frozen=True)
class Temperature:
    """Learnable softmax temperature, stored directly (not log-scale)."""

    value: float = 1.0
    learnable: bool = True

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NonFiniteInputError("temperature must be finite")
        if self.value < TAU_MIN:
            raise ValueError(f"temperature {self.value} below minimum {TAU_MIN}")


def _tau_value(tau) -> float:
    """Accept a Temperature or a bare positive float."""
    value = tau.value if isinstance(tau, Temperature) else float(tau)
    if not math.isfinite(value) or value <= 0.0:
        raise NonFiniteInputError(f"temperature must be finite and positive, got {value}")
    return value


def _as_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInputError(f"{name} contains NaN or infinity")
    return v


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two embeddings, clamped to [-1, 1].

    Raises DimensionMismatchError on unequal dims and ZeroVectorError if
    either operand has zero norm (a degenerate embedding, not similarity 0).
    """
    va = _as_vector(a, "a")
    vb = _as_vector(b, "b")
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity undefined for a zero vector")
    # Rounding can push |cos| marginally past 1; clamp so downstream code
    # may rely on the closed range.
    return float(np.clip(float(np.dot(va, vb)) / (na * nb), -1.0, 1.0))


def stable_softmax(logits) -> np.ndarray:
    """Softmax computed with max-subtraction; preserves the argmax exactly."""
    z = _as_vector(logits, "logits")
    if z.size == 0:
        raise EmptyInputError("softmax of an empty vector is undefined")
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_square(S) -> np.ndarray:
    m = np.asarray(S, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquareMatrixError(f"similarity matrix must be square, got shape {m.shape}")
    if m.shape[0] == 0:
        raise EmptyInputError("similarity matrix must have at least one row")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInputError("similarity matrix contains NaN or infinity")
    return m


def _mean_diag_nll(S: np.ndarray, tau: float) -> float:
    """Mean over rows of -log softmax(S_row / tau) at the diagonal entry."""
    z = S / tau
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    return float(np.mean(lse - np.diagonal(z)))


def loss_i2t(S, tau) -> float:
    """Image-to-text contrastive loss: softmax over candidates per row."""
    return _mean_diag_nll(_check_square(S), _tau_value(tau))


def loss_t2i(S, tau) -> float:
    """Text-to-image contrastive loss: the row computation on the transpose."""
    return _mean_diag_nll(_check_square(S).T, _tau_value(tau))


def total_loss(S, tau) -> float:
    """Average of the two directional losses."""
    m = _check_square(S)
    t = _tau_value(tau)
    return 0.5 * (_mean_diag_nll(m, t) + _mean_diag_nll(m.T, t))


@dataclass(frozen=True)
class ContrastiveGradients:
    """Analytic gradients of the total loss, plus the loss itself."""

    loss: float
    texts: np.ndarray   # (N, d) gradient w.r.t. each text embedding entry
    images: np.ndarray  # (N, d) gradient w.r.t. each image embedding entry
    tau: float          # gradient w.r.t. the temperature


def _row_softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def total_loss_grad(texts, images, tau) -> ContrastiveGradients:
    """Gradients of the total loss through cosine and both softmaxes.

    Derivation sketch: with unit rows T_hat, I_hat and S = T_hat @ I_hat.T,
    Z = S/tau, P = row-softmax(Z), Q = column-softmax(Z),

        dL/dZ = (P + Q - 2*Id) / (2N)
        dL/dS = dL/dZ / tau
        dL/dtau = -sum(dL/dZ * S) / tau^2

    then dL/dT_hat = dL/dS @ I_hat and the unit-normalization pullback
    maps a gradient g at t_hat back to (g - (g . t_hat) t_hat) / ||t||.
    Verified against central finite differences in the test suite.
    """
    T = np.asarray(texts, dtype=np.float64)
    I = np.asarray(images, dtype=np.float64)
    if T.ndim != 2 or I.ndim != 2:
        raise DimensionMismatchError("batches must be 2-D (N, d) arrays")
    if T.shape != I.shape:
        raise DimensionMismatchError(f"batch shapes differ: {T.shape} vs {I.shape}")
    n = T.shape[0]
    if n < 2:
        raise BatchTooSmallError("contrastive gradients need a batch of at least 2 pairs")
    if not (np.all(np.isfinite(T)) and np.all(np.isfinite(I))):
        raise NonFiniteInputError("batch contains NaN or infinity")
    t = _tau_value(tau)

    t_norms = np.linalg.norm(T, axis=1, keepdims=True)
    i_norms = np.linalg.norm(I, axis=1, keepdims=True)
    if np.any(t_norms == 0.0) or np.any(i_norms == 0.0):
        raise ZeroVectorError("batch contains a zero embedding")
    T_hat = T / t_norms
    I_hat = I / i_norms

    S = T_hat @ I_hat.T
    Z = S / t
    loss = 0.5 * (
        float(np.mean(-np.diagonal(Z) + _logsumexp_rows(Z)))
        + float(np.mean(-np.diagonal(Z) + _logsumexp_rows(Z.T)))
    )

    P = _row_softmax(Z)
    Q = _row_softmax(Z.T).T
    dZ = (P + Q - 2.0 * np.eye(n)) / (2.0 * n)
    dS = dZ / t
    d_tau = float(-np.sum(dZ * S) / (t * t))

    dT_hat = dS @ I_hat
    dI_hat = dS.T @ T_hat
    dT = (dT_hat - np.sum(dT_hat * T_hat, axis=1, keepdims=True) * T_hat) / t_norms
    dI = (dI_hat - np.sum(dI_hat * I_hat, axis=1, keepdims=True) * I_hat) / i_norms
    return ContrastiveGradients(loss=loss, texts=dT, images=dI, tau=d_tau)


def _logsumexp_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(z - m), axis=1, keepdims=True))).ravel()
