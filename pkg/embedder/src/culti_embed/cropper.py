"""Seeded random patch cropping.

Each record gets its own PRNG stream derived from (seed, id), so adding,
removing, or reordering other records never changes a record's crops.
Scales are drawn per axis, uniformly inside the configured range; the
offset is then uniform over all positions keeping the crop fully inside
the frame. Draw order per patch: scale_x, scale_y, offset_x, offset_y.
"""

from __future__ import annotations

from dataclasses import dataclass

from ._rng import record_stream


@dataclass(frozen=True)
class CropSpec:
    """Patch sampling parameters: count, per-axis scale range, seed."""

    n_patches: int = 9
    scale_min: float = 0.4
    scale_max: float = 0.8
    seed: int = 42

    def __post_init__(self):
        if self.n_patches < 1:
            raise ValueError(f"n_patches must be >= 1, got {self.n_patches}")
        if not (0.0 < self.scale_min <= self.scale_max <= 1.0):
            raise ValueError(
                f"need 0 < scale_min <= scale_max <= 1, got "
                f"[{self.scale_min}, {self.scale_max}]"
            )


@dataclass(frozen=True)
class CropBox:
    """Pixel rectangle, left/upper inclusive, right/lower exclusive."""

    left: int
    upper: int
    right: int
    lower: int

    def as_tuple(self):
        return (self.left, self.upper, self.right, self.lower)


def _side(stream, full: int, spec: CropSpec) -> int:
    scale = spec.scale_min + stream.unit() * (spec.scale_max - spec.scale_min)
    return min(full, max(1, round(scale * full)))


def sample_crops(record_id: str, width: int, height: int, spec: CropSpec) -> list:
    """The record's crop boxes, identical for any corpus containing it."""
    if width < 1 or height < 1:
        raise ValueError(f"degenerate image size {width}x{height}")
    stream = record_stream(spec.seed, record_id)
    boxes = []
    for _ in range(spec.n_patches):
        w = _side(stream, width, spec)
        h = _side(stream, height, spec)
        left = stream.below(width - w + 1)
        upper = stream.below(height - h + 1)
        boxes.append(CropBox(left=left, upper=upper, right=left + w, lower=upper + h))
    return boxes
