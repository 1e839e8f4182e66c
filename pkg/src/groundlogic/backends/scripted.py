"""A deterministic, scripted stand-in for every model service.

Scenes are synthetic images made of coloured rectangles.  The scripted world
answers each request the way a perfectly predictable model would, identifying
which scene/entity a request refers to by hashing the pixels it was sent.
Answers are a pure function of the request: where a scene scripts a sequence
of outputs, the retry number carried in the feedback picks the element.  That
keeps recordings free of conflicting answers.
"""

from __future__ import annotations

import base64
import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from PIL import Image

from ..spatial import Bitmask, BoundingBox
from ..validation import annotate_candidate
from . import prompts
from .suite import BackendSuite
from .types import (
    MALFORMED,
    CapabilityError,
    ModelRequest,
    ModelResponse,
    VisionRequest,
    decode_image,
    encode_image,
    pixel_digest,
)

PALETTE = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
]

DEFAULT_ATTRIBUTE = 0.05
DEFAULT_RELATION = 0.05


@dataclass
class SceneEntity:
    category: str
    box: tuple[int, int, int, int]
    confidence: float
    attributes: dict[str, float] = field(default_factory=dict)
    answer: float = 0.1  # P(Yes) when this entity is shown to the answerer


@dataclass
class Scene:
    name: str
    query: str
    width: int
    height: int
    entities: list[SceneEntity]
    caption: str = "A synthetic scene."
    # Category-extractor answers indexed by retry number; the last one repeats.
    categories: list[list[str]] = field(default_factory=lambda: [[]])
    # Raw logic-generator outputs indexed by retry number; the last one repeats.
    rules: list[str] = field(default_factory=lambda: [""])
    # (subject id, object id, phrase) -> P(Yes) for the relation recognizer.
    relations: dict[tuple[str, str, str], float] = field(default_factory=dict)
    fallback: tuple[tuple[int, int, int, int], float] | None = None
    fallback_answer: float = 0.9
    # Per-entity depth (0 nearest) painted over background_depth; None gives a constant 0.5 field.
    depths: list[float] | None = None
    background_depth: float = 1.0
    background: tuple[int, int, int] = (235, 235, 235)
    # role -> (kind, detail): that role always fails with a CapabilityError.
    errors: dict[str, tuple[str, str]] = field(default_factory=dict)

    def entity_ids(self) -> list[str]:
        counts: dict[str, int] = {}
        ids = []
        for ent in self.entities:
            k = counts.get(ent.category, 0)
            counts[ent.category] = k + 1
            ids.append(f"{ent.category}_{k}")
        return ids

    def render(self) -> Image.Image:
        arr = np.empty((self.height, self.width, 3), dtype=np.uint8)
        arr[:] = self.background
        for i, ent in enumerate(self.entities):
            x1, y1, x2, y2 = ent.box
            arr[y1:y2, x1:x2] = PALETTE[i % len(PALETTE)]
            # A stripe of a second colour keeps crops of equal-sized boxes distinct.
            arr[y1 : y1 + 2, x1:x2] = PALETTE[(i + 3) % len(PALETTE)]
            arr[y1 + 2 : y1 + 3, x1 : x1 + 1 + i] = (0, 0, 0)
        return Image.fromarray(arr)

    def depth_map(self) -> np.ndarray:
        if self.depths is None:
            return np.full((self.height, self.width), 0.5, dtype="<f4")
        values = np.full((self.height, self.width), self.background_depth, dtype="<f4")
        for ent, d in zip(self.entities, self.depths):
            x1, y1, x2, y2 = ent.box
            values[y1:y2, x1:x2] = d
        return values

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scene":
        data = dict(data)
        data["entities"] = [SceneEntity(**{**e, "box": tuple(e["box"])}) for e in data["entities"]]
        if "relations" in data:
            data["relations"] = {
                (r["subject"], r["object"], r["phrase"]): r["p"] for r in data["relations"]
            }
        if data.get("fallback") is not None:
            fb = data["fallback"]
            data["fallback"] = (tuple(fb["box"]), fb["confidence"])
        if "errors" in data:
            data["errors"] = {role: tuple(v) for role, v in data["errors"].items()}
        return cls(**data)


def _yes_no(p: float) -> ModelResponse:
    if p <= 0.0:
        return ModelResponse("No")
    if p >= 1.0:
        return ModelResponse("Yes")
    text = "Yes" if p >= 0.5 else "No"
    return ModelResponse(text, (("Yes", math.log(p)), ("No", math.log1p(-p))))


_BOX_RE = re.compile(r"red bounding box \((\d+), (\d+), (\d+), (\d+)\)")
_REL_RE = re.compile(r"Is A (.+) B\?")


class ScriptedWorld:
    """Implements both the chat and the vision-service contracts for a set of scenes."""

    def __init__(self, scenes: Sequence[Scene]):
        self.scenes = list(scenes)
        self._by_image: dict[str, Scene] = {}
        self._by_crop: dict[str, tuple[Scene, int]] = {}
        self._by_annotation: dict[str, tuple[Scene, int | None]] = {}
        self.images: dict[str, Image.Image] = {}
        for scene in self.scenes:
            image = scene.render()
            self.images[scene.name] = image
            self._by_image[_digest(image)] = scene
            for i, ent in enumerate(scene.entities):
                self._by_crop[_digest(image.crop(ent.box))] = (scene, i)
                self._by_annotation[_digest(annotate_candidate(image, ent.box).image)] = (scene, i)
            if scene.fallback is not None:
                fb = annotate_candidate(image, scene.fallback[0]).image
                self._by_annotation.setdefault(_digest(fb), (scene, None))

    def _scene_for_query(self, prompt: str) -> Scene:
        for scene in self.scenes:
            if (
                f"Query: {scene.query}\nAnswer: " in prompt
                or f'find the target "{scene.query}"\nYour answer: ' in prompt
            ):
                return scene
        raise CapabilityError(MALFORMED, "scripted world: unknown query")

    def _check_error(self, scene: Scene, role: str) -> None:
        if role in scene.errors:
            kind, detail = scene.errors[role]
            raise CapabilityError(kind, detail)

    # -- chat ------------------------------------------------------------------

    def complete(self, request: ModelRequest) -> ModelResponse:
        prompt = request.prompt
        if prompt == prompts.CAPTION_PROMPT:
            scene = self._image_scene(request.image)
            self._check_error(scene, "captioner")
            return ModelResponse(scene.caption)
        if "find important objects" in prompt:
            scene = self._scene_for_query(prompt)
            self._check_error(scene, "entity_extractor")
            cats = _pick(scene.categories, prompt)
            return ModelResponse('{"output": [' + ", ".join(f'"{c}"' for c in cats) + "]}")
        if "generate the ProbLog code" in prompt:
            scene = self._scene_for_query(prompt)
            self._check_error(scene, "logic_generator")
            return ModelResponse(_pick(scene.rules, prompt))
        if "find the relations of objects" in prompt:
            scene = self._image_scene(request.image)
            self._check_error(scene, "relation_recognizer")
            boxes = [tuple(int(v) for v in m) for m in _BOX_RE.findall(prompt)]
            phrase = _REL_RE.search(prompt).group(1)
            ids = scene.entity_ids()
            index = {tuple(e.box): ids[i] for i, e in enumerate(scene.entities)}
            key = (index.get(boxes[0]), index.get(boxes[1]), phrase)
            return _yes_no(scene.relations.get(key, DEFAULT_RELATION))
        if "check if the highlighted object" in prompt:
            found = self._by_annotation.get(_digest(decode_image(request.image)))
            if found is None:
                raise CapabilityError(MALFORMED, "scripted world: unknown annotated image")
            scene, i = found
            self._check_error(scene, "answerer")
            p = scene.fallback_answer if i is None else scene.entities[i].answer
            return _yes_no(p)
        if "The image is a crop around a single object" in prompt:
            found = self._by_crop.get(_digest(decode_image(request.image)))
            if found is None:
                raise CapabilityError(MALFORMED, "scripted world: unknown crop")
            scene, i = found
            self._check_error(scene, "attribute_recognizer")
            phrase = re.search(r'description "(.+)"\?', prompt).group(1)
            return _yes_no(scene.entities[i].attributes.get(phrase, DEFAULT_ATTRIBUTE))
        raise CapabilityError(MALFORMED, "scripted world: unrecognized prompt")

    def _image_scene(self, png: bytes | None) -> Scene:
        if png is None:
            raise CapabilityError(MALFORMED, "scripted world: image expected")
        scene = self._by_image.get(_digest(decode_image(png)))
        if scene is None:
            raise CapabilityError(MALFORMED, "scripted world: unknown image")
        return scene

    # -- vision services ---------------------------------------------------------

    def call(self, request: VisionRequest) -> dict:
        scene = self._image_scene(request.image)
        if request.route == "detect":
            self._check_error(scene, "detector")
            if "query" in request.params:
                if scene.fallback is None:
                    return {"detections": []}
                box, conf = scene.fallback
                return {"detections": [{"category": "object", "box": list(box), "confidence": conf}]}
            wanted = {c.lower() for c in request.params.get("categories", [])}
            return {
                "detections": [
                    {"category": e.category, "box": list(e.box), "confidence": e.confidence}
                    for e in scene.entities
                    if e.category.lower() in wanted
                ]
            }
        if request.route == "depth":
            self._check_error(scene, "depth")
            values = scene.depth_map()
            return {
                "depth": {
                    "w": scene.width,
                    "h": scene.height,
                    "values_b64_f32": base64.b64encode(values.tobytes()).decode("ascii"),
                }
            }
        if request.route == "segment":
            self._check_error(scene, "segmenter")
            box = BoundingBox(*request.params["box"])
            rle = Bitmask.from_box(box, scene.width, scene.height).to_rle()
            return {"mask": {"w": rle["w"], "h": rle["h"], "rle_counts": rle["counts"]}}
        raise CapabilityError(MALFORMED, f"scripted world: unknown route {request.route}")

    def suite(self, segmenter: bool = False, depth: bool = True) -> BackendSuite:
        from .suite import CHAT_ROLES

        vision = {"detector": self}
        if depth:
            vision["depth"] = self
        if segmenter:
            vision["segmenter"] = self
        return BackendSuite({role: self for role in CHAT_ROLES}, vision)


_RETRY_RE = re.compile(r"Feedback on your previous answer: .*\(retry (\d+)\)", re.DOTALL)


def _pick(options: Sequence, prompt: str):
    m = _RETRY_RE.search(prompt)
    k = int(m.group(1)) if m else 0
    return options[min(k, len(options) - 1)]


def _digest(image: Image.Image) -> str:
    return pixel_digest(encode_image(image))
