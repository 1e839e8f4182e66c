"""Evaluation dataset files.

A dataset is a JSON array of objects::

    {"id": "s1", "image": "images/s1.png", "query": "the red car",
     "gt_box": [x1, y1, x2, y2], "gt_mask": {"w": W, "h": H, "counts": [...]}}

Image paths are resolved relative to the dataset file.  ``gt_mask`` uses
uncompressed COCO run lengths (column-major, starting with a background run),
so RefCOCO-style annotations convert with ``pycocotools.mask.frPyObjects`` +
``decode`` followed by :meth:`groundlogic.spatial.Bitmask.to_rle`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..spatial import Bitmask, BoundingBox, DimensionMismatch, SpatialError


class SchemaError(ValueError):
    def __init__(self, index: int | None, field: str | None, message: str):
        self.index, self.field = index, field
        where = "dataset" if index is None else f"entry {index}"
        if field:
            where += f", field {field!r}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    image: Path
    query: str
    gt_box: BoundingBox | None = None
    gt_mask: Bitmask | None = None


def _entry(index: int, raw: object, base: Path) -> DatasetEntry:
    if not isinstance(raw, dict):
        raise SchemaError(index, None, "must be an object")
    unknown = set(raw) - {"id", "image", "query", "gt_box", "gt_mask"}
    if unknown:
        raise SchemaError(index, sorted(unknown)[0], "unknown field")
    for key in ("id", "image", "query"):
        if not isinstance(raw.get(key), str) or not raw[key].strip():
            raise SchemaError(index, key, "must be a non-empty string")

    image = (base / raw["image"]).resolve()
    if not image.is_file():
        raise SchemaError(index, "image", f"{image} does not exist")

    gt_box = None
    if raw.get("gt_box") is not None:
        box = raw["gt_box"]
        if not (isinstance(box, list) and len(box) == 4 and all(isinstance(v, int) for v in box)):
            raise SchemaError(index, "gt_box", "must be four integers [x1, y1, x2, y2]")
        try:
            gt_box = BoundingBox(*box)
        except SpatialError as exc:
            raise SchemaError(index, "gt_box", str(exc)) from exc

    gt_mask = None
    if raw.get("gt_mask") is not None:
        m = raw["gt_mask"]
        if not (isinstance(m, dict) and isinstance(m.get("counts"), list)):
            raise SchemaError(index, "gt_mask", 'must be {"w": int, "h": int, "counts": [int, ...]}')
        try:
            gt_mask = Bitmask.from_rle(m)
        except (DimensionMismatch, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(index, "gt_mask", f"inconsistent run lengths: {exc}") from exc

    if gt_box is None and gt_mask is None:
        raise SchemaError(index, "gt_box", "one of gt_box / gt_mask is required")
    return DatasetEntry(raw["id"], image, raw["query"], gt_box, gt_mask)


def load_dataset(path: str | Path) -> list[DatasetEntry]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(None, None, f"not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaError(None, None, "top level must be a JSON array")
    entries = [_entry(i, raw, path.parent) for i, raw in enumerate(data)]
    seen: set[str] = set()
    for i, e in enumerate(entries):
        if e.id in seen:
            raise SchemaError(i, "id", f"duplicate id {e.id!r}")
        seen.add(e.id)
    return entries
