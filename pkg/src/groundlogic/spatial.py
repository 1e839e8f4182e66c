"""Box geometry, depth-based relations and overlap metrics.

Coordinates are integer pixels with the origin at the top-left corner; a box
covers the half-open pixel range ``[x1, x2) x [y1, y2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Slope of the logistic applied to normalized displacements; 20% of the
# image width already gives a score above 0.9.
DEFAULT_STEEPNESS = 12.0

GEOMETRIC_RELATIONS = frozenset(
    {"left of", "right of", "above", "below", "inside", "contains", "overlapping"}
)
DEPTH_RELATIONS = frozenset({"in front of", "behind"})

# Phrasings mapped onto the lexicon before routing.
RELATION_ALIASES = {
    "to the left of": "left of",
    "on the left of": "left of",
    "left": "left of",
    "to the right of": "right of",
    "on the right of": "right of",
    "right": "right of",
    "on top of": "above",
    "over": "above",
    "under": "below",
    "beneath": "below",
    "underneath": "below",
    "in": "inside",
    "within": "inside",
    "overlaps": "overlapping",
    "overlap": "overlapping",
    "in front": "in front of",
    "behind of": "behind",
}


class SpatialError(ValueError):
    pass


class UnknownSpatialRelation(SpatialError):
    pass


class UnknownDepthRelation(SpatialError):
    pass


class EmptyRegion(SpatialError):
    pass


class DimensionMismatch(SpatialError):
    pass


class InvalidBox(SpatialError):
    pass


def normalize_relation(phrase: str) -> str:
    key = " ".join(phrase.replace("_", " ").lower().split())
    return RELATION_ALIASES.get(key, key)


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if min(self.x1, self.y1) < 0:
            raise InvalidBox(f"negative coordinate in {self.as_list()}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBox(f"degenerate box {self.as_list()}")

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "BoundingBox":
        x1, y1, x2, y2 = (int(round(v)) for v in values)
        return cls(x1, y1, x2, y2)

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)

    def within(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def intersection_area(self, other: "BoundingBox") -> int:
        w = min(self.x2, other.x2) - max(self.x1, other.x1)
        h = min(self.y2, other.y2) - max(self.y1, other.y1)
        return max(w, 0) * max(h, 0)


def clip_box(values: Sequence[float], width: int, height: int) -> BoundingBox | None:
    """Round and clip raw detector coordinates; None if nothing is left."""
    x1, y1, x2, y2 = (int(round(v)) for v in values)
    x1, y1 = max(x1, 0), max(y1, 0)
    x2, y2 = min(x2, width), min(y2, height)
    if x1 >= x2 or y1 >= y2:
        return None
    return BoundingBox(x1, y1, x2, y2)


@dataclass(frozen=True, slots=True)
class RelationScore:
    relation: str
    subject: str
    object: str
    probability: float


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    return inter / union


def geometric_relation(
    a: BoundingBox,
    b: BoundingBox,
    relation: str,
    img_w: int,
    img_h: int,
    steepness: float = DEFAULT_STEEPNESS,
) -> float:
    """Soft score that ``a`` stands in ``relation`` to ``b``."""
    rel = normalize_relation(relation)
    if rel not in GEOMETRIC_RELATIONS:
        raise UnknownSpatialRelation(relation)
    if img_w <= 0 or img_h <= 0:
        raise SpatialError("image dimensions must be positive")
    for box in (a, b):
        if not box.within(img_w, img_h):
            raise InvalidBox(f"box {box.as_list()} outside {img_w}x{img_h} image")
    (ax, ay), (bx, by) = a.center, b.center
    if rel == "left of":
        return logistic(steepness * (bx - ax) / img_w)
    if rel == "right of":
        return logistic(steepness * (ax - bx) / img_w)
    if rel == "above":
        return logistic(steepness * (by - ay) / img_h)
    if rel == "below":
        return logistic(steepness * (ay - by) / img_h)
    if rel == "inside":
        return a.intersection_area(b) / a.area
    if rel == "contains":
        return a.intersection_area(b) / b.area
    return box_iou(a, b)


def depth_relation(
    a_depth: float, b_depth: float, relation: str, steepness: float = DEFAULT_STEEPNESS
) -> float:
    """Score that ``a`` is in front of / behind ``b``, with depth 0 nearest."""
    rel = normalize_relation(relation)
    if rel == "in front of":
        return logistic(steepness * (b_depth - a_depth))
    if rel == "behind":
        return logistic(steepness * (a_depth - b_depth))
    raise UnknownDepthRelation(relation)


@dataclass(frozen=True)
class DepthField:
    """Row-major depth map normalized to [0, 1] with 0 nearest to the camera."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(self.height, self.width)
        if not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1:
            raise SpatialError("depth values must be finite and within [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_raw(cls, raw: np.ndarray, near_is_zero: bool = True) -> "DepthField":
        """Min-max normalize an estimator's output into the near-is-zero convention."""
        raw = np.asarray(raw, dtype=np.float64)
        lo, hi = float(raw.min()), float(raw.max())
        if lo < 0 or hi > 1:
            raw = (raw - lo) / (hi - lo) if hi > lo else np.zeros_like(raw)
        if not near_is_zero:
            raw = 1.0 - raw
        return cls(raw.shape[1], raw.shape[0], raw)


def entity_depth(field: DepthField, box: BoundingBox) -> float:
    region = field.values[box.y1 : min(box.y2, field.height), box.x1 : min(box.x2, field.width)]
    if region.size == 0:
        raise EmptyRegion(f"box {box.as_list()} covers no depth pixels")
    return float(np.median(region))


class Bitmask:
    """Binary mask of shape (height, width)."""

    __slots__ = ("array",)

    def __init__(self, array: np.ndarray):
        arr = np.asarray(array).astype(bool)
        if arr.ndim != 2:
            raise DimensionMismatch("mask must be two-dimensional")
        arr.setflags(write=False)
        self.array = arr

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def area(self) -> int:
        return int(self.array.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, Bitmask) and np.array_equal(self.array, other.array)

    def __repr__(self) -> str:
        return f"Bitmask({self.width}x{self.height}, area={self.area})"

    @classmethod
    def from_box(cls, box: BoundingBox, width: int, height: int) -> "Bitmask":
        arr = np.zeros((height, width), dtype=bool)
        arr[box.y1 : box.y2, box.x1 : box.x2] = True
        return cls(arr)

    def to_rle(self) -> dict:
        """COCO uncompressed RLE: column-major runs starting with a 0-run."""
        flat = self.array.ravel(order="F").astype(np.int8)
        counts = []
        if flat.size:
            change = np.flatnonzero(np.diff(flat)) + 1
            bounds = np.concatenate(([0], change, [flat.size]))
            counts = np.diff(bounds).tolist()
            if flat[0] == 1:
                counts.insert(0, 0)
        return {"w": self.width, "h": self.height, "counts": [int(c) for c in counts]}

    @classmethod
    def from_rle(cls, rle: dict) -> "Bitmask":
        w, h, counts = int(rle["w"]), int(rle["h"]), [int(c) for c in rle["counts"]]
        if any(c < 0 for c in counts) or sum(counts) != w * h:
            raise DimensionMismatch(f"RLE counts sum to {sum(counts)}, expected {w * h}")
        values = np.zeros(len(counts), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, counts)
        return cls(flat.reshape((h, w), order="F"))


def mask_intersection_union(pred: Bitmask, gt: Bitmask) -> tuple[int, int]:
    if pred.array.shape != gt.array.shape:
        raise DimensionMismatch(f"{pred!r} vs {gt!r}")
    inter = int(np.logical_and(pred.array, gt.array).sum())
    union = int(np.logical_or(pred.array, gt.array).sum())
    return inter, union
