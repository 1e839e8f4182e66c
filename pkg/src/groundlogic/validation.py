"""Candidate highlighting and yes/no verdicts for the answering step."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image

from .spatial import BoundingBox, InvalidBox

LABEL = "A"
LINE_WIDTH = 4
LABEL_HEIGHT = 20
BOX_COLOR = (255, 0, 0)
TEXT_COLOR = (255, 255, 255)
ACCEPT_THRESHOLD = 0.5

# 5x7 bitmap for the label letter, drawn at 2x scale with a 3 px margin so the
# label is exactly LABEL_HEIGHT pixels tall. Shipping the glyph keeps rendering
# independent of system fonts.
_GLYPH = (
    "..#..",
    ".#.#.",
    "#...#",
    "#...#",
    "#####",
    "#...#",
    "#...#",
)
_GLYPH_SCALE = 2
_LABEL_PAD = 3
_GLYPH_MASK = np.kron(
    np.array([[c == "#" for c in row] for row in _GLYPH], dtype=bool),
    np.ones((_GLYPH_SCALE, _GLYPH_SCALE), dtype=bool),
)
LABEL_WIDTH = _GLYPH_MASK.shape[1] + 2 * _LABEL_PAD


class BoxOutOfBounds(InvalidBox):
    pass


class Verdict(enum.Enum):
    YES = "Yes"
    NO = "No"


@dataclass(frozen=True)
class AnnotatedImage:
    image: Image.Image
    box: BoundingBox
    label: str = LABEL

    def to_png(self) -> bytes:
        return encode_png(self.image)


def encode_png(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def _coerce_box(box: BoundingBox | Sequence[int], width: int, height: int) -> BoundingBox:
    if isinstance(box, BoundingBox):
        coords = box.as_list()
    else:
        coords = [int(v) for v in box]
    x1, y1, x2, y2 = coords
    if x1 < 0 or y1 < 0 or x2 > width or y2 > height or x1 >= x2 or y1 >= y2:
        raise BoxOutOfBounds(f"box {coords} invalid for {width}x{height} image")
    return box if isinstance(box, BoundingBox) else BoundingBox(x1, y1, x2, y2)


def annotate_candidate(image: Image.Image, box: BoundingBox | Sequence[int]) -> AnnotatedImage:
    """Draw a red outline and an "A" tag on a copy of ``image``."""
    rgb = np.array(image.convert("RGB"), dtype=np.uint8)
    height, width = rgb.shape[:2]
    b = _coerce_box(box, width, height)

    lw = LINE_WIDTH
    rgb[b.y1 : b.y2, b.x1 : min(b.x1 + lw, b.x2)] = BOX_COLOR
    rgb[b.y1 : b.y2, max(b.x2 - lw, b.x1) : b.x2] = BOX_COLOR
    rgb[b.y1 : min(b.y1 + lw, b.y2), b.x1 : b.x2] = BOX_COLOR
    rgb[max(b.y2 - lw, b.y1) : b.y2, b.x1 : b.x2] = BOX_COLOR

    # Tag sits above the box's top-left corner, or just inside it when there is
    # no room; either way it is shifted to stay inside the frame.
    lx = min(b.x1, max(width - LABEL_WIDTH, 0))
    ly = b.y1 - LABEL_HEIGHT if b.y1 >= LABEL_HEIGHT else b.y1
    ly = min(ly, max(height - LABEL_HEIGHT, 0))
    tag = np.empty((LABEL_HEIGHT, LABEL_WIDTH, 3), dtype=np.uint8)
    tag[:] = BOX_COLOR
    gh, gw = _GLYPH_MASK.shape
    tag[_LABEL_PAD : _LABEL_PAD + gh, _LABEL_PAD : _LABEL_PAD + gw][_GLYPH_MASK] = TEXT_COLOR
    th, tw = min(LABEL_HEIGHT, height - ly), min(LABEL_WIDTH, width - lx)
    rgb[ly : ly + th, lx : lx + tw] = tag[:th, :tw]

    return AnnotatedImage(Image.fromarray(rgb), b)


def decide(p_yes: float) -> Verdict:
    """Pick the more likely answer; an exact tie counts as Yes."""
    if not 0.0 <= p_yes <= 1.0:
        raise ValueError(f"probability {p_yes} outside [0, 1]")
    return Verdict.YES if p_yes >= ACCEPT_THRESHOLD else Verdict.NO
