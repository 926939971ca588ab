"""Manifest parsing, validation, and deterministic 7:1:2 splitting.

A manifest is UTF-8 text, one JSON object per line, with exactly the keys
id, title, description, image_path, category, volume, source and an
optional split. Splitting partitions each (volume, category) group
independently in a 7:1:2 train:test:val ratio.

Note the ratio order: 7 train, 1 test, 2 val. Elsewhere 7:1:2 often means
train:val:test; here the middle share is the test set.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional

from ._rng import SplitMix64, group_seed
from ._util import atomic_write
from .errors import (
    CrossSourceCategoryError,
    DuplicateIdError,
    MalformedLineError,
    ManifestError,
)

CATEGORIES = frozenset({"pattern", "original_textile", "cropped_pattern", "mural"})
SOURCES = frozenset({"silk", "dunhuang"})
SPLITS = ("train", "test", "val")

# Hard cap from the embedding-store id prefix (16-bit length); enforced at
# parse time so an oversized id cannot reach the store layer.
MAX_ID_BYTES = 65535

_REQUIRED_KEYS = ("id", "title", "description", "image_path", "category", "volume", "source")
_ALLOWED_KEYS = frozenset(_REQUIRED_KEYS) | {"split"}


@dataclass(frozen=True)
class ManifestRecord:
    """One catalogued item: an image file paired with its description."""

    id: str
    title: str
    description: str
    image_path: str
    category: str
    volume: str
    source: str
    split: Optional[str] = None


def _record_from_obj(obj, line_no: int) -> ManifestRecord:
    if not isinstance(obj, dict):
        raise MalformedLineError("line is not an object", line_no)
    unknown = set(obj) - _ALLOWED_KEYS
    if unknown:
        raise MalformedLineError(f"unknown keys: {sorted(unknown)}", line_no)
    missing = [k for k in _REQUIRED_KEYS if k not in obj]
    if missing:
        raise MalformedLineError(f"missing keys: {missing}", line_no)
    for key, value in obj.items():
        if not isinstance(value, str):
            raise MalformedLineError(f"key {key!r} must be a string", line_no)
    if not obj["id"]:
        raise MalformedLineError("empty id", line_no)
    if len(obj["id"].encode("utf-8")) > MAX_ID_BYTES:
        raise MalformedLineError(f"id longer than {MAX_ID_BYTES} UTF-8 bytes", line_no)
    if not obj["description"]:
        raise MalformedLineError("empty description", line_no)
    if not obj["image_path"]:
        raise MalformedLineError("empty image_path", line_no)
    if obj["category"] not in CATEGORIES:
        raise MalformedLineError(f"unknown category {obj['category']!r}", line_no)
    if obj["source"] not in SOURCES:
        raise MalformedLineError(f"unknown source {obj['source']!r}", line_no)
    split = obj.get("split")
    if split is not None and split not in SPLITS:
        raise MalformedLineError(f"unknown split {split!r}", line_no)
    record = ManifestRecord(
        id=obj["id"],
        title=obj["title"],
        description=obj["description"],
        image_path=obj["image_path"],
        category=obj["category"],
        volume=obj["volume"],
        source=obj["source"],
        split=split,
    )
    _check_source_rule(record, line_no)
    return record


def _check_source_rule(record: ManifestRecord, line_no: int) -> None:
    expected = "dunhuang" if record.category == "mural" else "silk"
    if record.source != expected:
        raise CrossSourceCategoryError(
            f"category {record.category!r} requires source {expected!r}, got {record.source!r}",
            line_no,
            record.id,
        )


def _parse_lines(text: str, stop_on_first: bool):
    records: list[ManifestRecord] = []
    errors: list[ManifestError] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        try:
            if not line.strip():
                raise MalformedLineError("blank line", line_no)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(f"invalid JSON: {exc.msg}", line_no) from None
            record = _record_from_obj(obj, line_no)
            if record.id in seen:
                raise DuplicateIdError(
                    f"id {record.id!r} already used on line {seen[record.id]}",
                    line_no,
                    record.id,
                )
            seen[record.id] = line_no
            records.append(record)
        except ManifestError as exc:
            if stop_on_first:
                raise
            errors.append(exc)
    return records, errors


def parse_manifest(path) -> list[ManifestRecord]:
    """Parse a manifest file, raising on the first invalid line."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    records, _ = _parse_lines(text, stop_on_first=True)
    return records


def scan_manifest(path):
    """Lenient pass: returns (valid records, list of every error found)."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return _parse_lines(text, stop_on_first=False)


def record_to_line(record: ManifestRecord) -> str:
    """Serialize one record back to its manifest line (no newline)."""
    obj = {key: getattr(record, key) for key in _REQUIRED_KEYS}
    if record.split is not None:
        obj["split"] = record.split
    return json.dumps(obj, ensure_ascii=False)


def write_manifest(records, path) -> None:
    """Write records as manifest lines, atomically."""
    with atomic_write(path, "w") as handle:
        for record in records:
            handle.write(record_to_line(record) + "\n")


@dataclass(frozen=True)
class SplitAssignment:
    """Mapping of every record id to its split label, plus the seed used."""

    seed: int
    labels: dict

    def to_tsv(self) -> str:
        """Canonical serialized form: id<TAB>label lines, sorted by id."""
        return "".join(f"{i}\t{self.labels[i]}\n" for i in sorted(self.labels))


def split_quotas(n: int):
    """Largest-remainder 7:1:2 allocation of n items.

    Returns (train, test, val) counts. Computed in integer arithmetic
    (n*k // 10 with remainders n*k % 10) to avoid float rounding; leftover
    units go to the largest remainders, ties resolved train > val > test.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    floors = {"train": n * 7 // 10, "test": n * 1 // 10, "val": n * 2 // 10}
    remainders = {"train": n * 7 % 10, "test": n * 1 % 10, "val": n * 2 % 10}
    leftover = n - sum(floors.values())
    # Stable sort on descending remainder; listing order encodes the tie rule.
    for label in sorted(("train", "val", "test"), key=lambda k: -remainders[k])[:leftover]:
        floors[label] += 1
    return floors["train"], floors["test"], floors["val"]


def assign_splits(records, seed: int) -> SplitAssignment:
    """Deterministic per-(volume, category) 7:1:2 assignment.

    Ids within a group are sorted, then shuffled by a splitmix64-driven
    Fisher-Yates pass seeded from (seed, volume, category); the shuffled
    order is cut into train, test, val blocks sized by split_quotas. The
    same (records, seed) always produces the same assignment, regardless
    of record order in the input.
    """
    groups: dict[tuple, list] = {}
    for record in records:
        groups.setdefault((record.volume, record.category), []).append(record.id)
    labels: dict[str, str] = {}
    for (volume, category), ids in groups.items():
        ids = sorted(ids)
        SplitMix64(group_seed(seed, volume, category)).shuffle(ids)
        n_train, n_test, _ = split_quotas(len(ids))
        for position, record_id in enumerate(ids):
            if position < n_train:
                labels[record_id] = "train"
            elif position < n_train + n_test:
                labels[record_id] = "test"
            else:
                labels[record_id] = "val"
    return SplitAssignment(seed=seed, labels=labels)


def with_splits(records, assignment: SplitAssignment):
    """Return records with the split field set from an assignment."""
    return [replace(r, split=assignment.labels[r.id]) for r in records]


@dataclass(frozen=True)
class ManifestSummary:
    """Counts per (source, volume, category); total is the record count."""

    counts: dict
    total: int

    def by_source(self):
        totals = Counter()
        for (source, _, _), count in self.counts.items():
            totals[source] += count
        return dict(totals)


def summarize(records) -> ManifestSummary:
    counts = Counter((r.source, r.volume, r.category) for r in records)
    return ManifestSummary(counts=dict(counts), total=len(records))
