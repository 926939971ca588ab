"""Reader for the corpus manifest line format (JSONL).

The engine side owns full validation; this reader only needs the three
fields the embedder consumes (id, description, image_path) and fails with
a line number when a row cannot supply them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ManifestFormatError

_REQUIRED = ("id", "description", "image_path")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    description: str
    image_path: str


def read_manifest(path) -> list:
    entries = []
    seen = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                raise ManifestFormatError("blank manifest line", line_no)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestFormatError(f"invalid JSON: {exc.msg}", line_no) from None
            if not isinstance(obj, dict):
                raise ManifestFormatError("manifest line is not an object", line_no)
            for key in _REQUIRED:
                if not isinstance(obj.get(key), str) or not obj[key]:
                    raise ManifestFormatError(f"missing or empty field {key!r}", line_no)
            if obj["id"] in seen:
                raise ManifestFormatError(f"duplicate id {obj['id']!r}", line_no)
            seen.add(obj["id"])
            entries.append(ManifestEntry(
                id=obj["id"], description=obj["description"], image_path=obj["image_path"],
            ))
    return entries
