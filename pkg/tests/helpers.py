"""Independent oracle implementations used across the test modules.

Everything here deliberately avoids the package's own code paths:
cosines come from math.fsum loops, softmaxes from scipy, quotas from
exact Fraction arithmetic, rankings from Python's sorted(). Tests compare
the package against these, never against itself.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp, softmax


def oracle_cosine(a, b) -> float:
    """Scalar-loop cosine, no numpy dot products."""
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(math.fsum(float(x) * float(x) for x in a))
    nb = math.sqrt(math.fsum(float(y) * float(y) for y in b))
    return dot / (na * nb)


def oracle_softmax(x) -> np.ndarray:
    return softmax(np.asarray(x, dtype=np.float64))


def oracle_total_loss(S, tau) -> float:
    """Both direction losses via scipy logsumexp."""
    Z = np.asarray(S, dtype=np.float64) / tau
    n = Z.shape[0]
    i2t = np.mean([logsumexp(Z[i]) - Z[i, i] for i in range(n)])
    t2i = np.mean([logsumexp(Z[:, j]) - Z[j, j] for j in range(n)])
    return 0.5 * float(i2t + t2i)


def oracle_patch_weights(global_vec, patches, alpha) -> np.ndarray:
    sims = np.array([oracle_cosine(p, global_vec) for p in patches])
    return softmax(alpha * sims)


def oracle_local_score(text, global_vec, patches, alpha) -> float:
    w = oracle_patch_weights(global_vec, patches, alpha)
    sims = np.array([oracle_cosine(p, text) for p in patches])
    return float(np.dot(w, sims))


def oracle_pair_score(text_rec, image_rec, alpha, mode) -> float:
    """Score one (text record, image record) pair from scratch."""
    if mode == "global":
        return oracle_cosine(text_rec.global_vector, image_rec.global_vector)
    return oracle_local_score(
        text_rec.global_vector, image_rec.global_vector, list(image_rec.patches), alpha
    )


def oracle_topk(scores_by_id: dict, k: int):
    """Full sort by (score desc, id asc); returns [(id, score)] prefix."""
    ordered = sorted(scores_by_id.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[:k]


def oracle_quotas(n: int):
    """Largest-remainder 7:1:2 via exact Fraction arithmetic.

    Independent of the package's integer-modular route; ties on equal
    remainders prefer train, then val, then test.
    """
    shares = {"train": Fraction(7, 10), "test": Fraction(1, 10), "val": Fraction(2, 10)}
    exact = {k: n * v for k, v in shares.items()}
    floors = {k: int(v) for k, v in exact.items()}
    remainders = {k: exact[k] - floors[k] for k in shares}
    preference = {"train": 0, "val": 1, "test": 2}
    order = sorted(shares, key=lambda k: (-remainders[k], preference[k]))
    for label in order[: n - sum(floors.values())]:
        floors[label] += 1
    return floors["train"], floors["test"], floors["val"]


def oracle_store_size(records, dim: int) -> int:
    """Byte-layout calculator: header plus per-record arithmetic."""
    total = 4 + 2 + 1 + 1 + 4 + 8
    for record in records:
        total += 2 + len(record.id.encode("utf-8")) + 2
        total += 4 * (1 + record.patch_count) * dim
    return total


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Elementwise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = f(bumped.reshape(x.shape))
        bumped[i] = flat[i] - h
        down = f(bumped.reshape(x.shape))
        out[i] = (up - down) / (2.0 * h)
    return grad


def relative_gradient_error(analytic, numeric, tiny: float = 1e-12) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(numeric))), tiny)
    return float(np.max(np.abs(analytic - numeric))) / scale


def random_records(rng, n: int, dim: int, n_patches: int, prefix: str):
    """Store records with Gaussian vectors; ids are zero-padded."""
    from laclip.store import make_record

    records = []
    for i in range(n):
        patches = [rng.normal(size=dim) for _ in range(n_patches)]
        records.append(make_record(f"{prefix}{i:04d}", rng.normal(size=dim), patches))
    return records


def manifest_line(record_id: str, category: str = "pattern", volume: str = "v1",
                  split=None, **overrides) -> str:
    import json

    source = "dunhuang" if category == "mural" else "silk"
    obj = {
        "id": record_id,
        "title": f"title of {record_id}",
        "description": f"描述 {record_id}",
        "image_path": f"images/{record_id}.jpg",
        "category": category,
        "volume": volume,
        "source": source,
    }
    obj.update(overrides)
    if split is not None:
        obj["split"] = split
    return json.dumps(obj, ensure_ascii=False)
