"""Capability contracts over the chat and vision-service transports."""

from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from ..spatial import Bitmask, BoundingBox, DepthField, DimensionMismatch, clip_box
from ..validation import AnnotatedImage
from . import prompts
from .replay import (
    RecordingChatModel,
    RecordingVisionService,
    ReplayChatModel,
    ReplayStore,
    ReplayVisionService,
)
from .transport import HttpVisionService, OpenAIChatModel, looks_like_refusal
from .types import (
    MALFORMED,
    REFUSAL,
    BackendConfig,
    CapabilityError,
    CapabilityUnavailable,
    ChatModel,
    ModelRequest,
    ModelResponse,
    VisionRequest,
    VisionService,
    encode_image,
)

log = logging.getLogger(__name__)

CHAT_ROLES = (
    "captioner",
    "entity_extractor",
    "logic_generator",
    "relation_recognizer",
    "attribute_recognizer",
    "answerer",
)
VISION_ROLES = ("detector", "depth", "segmenter")
OPTIONAL_ROLES = frozenset({"segmenter", "depth"})


@dataclass(frozen=True)
class Detection:
    category: str
    box: BoundingBox
    confidence: float
    clamped: bool = False


def clamp_probability(value: float, what: str) -> tuple[float, bool]:
    if math.isnan(value):
        raise CapabilityError(MALFORMED, f"{what} is NaN")
    if 0.0 <= value <= 1.0:
        return value, False
    clamped = min(1.0, max(0.0, value))
    log.warning("%s %.6g clamped to %.1f", what, value, clamped)
    return clamped, True


def _normalize_token(token: str) -> str:
    return token.strip().strip(".,!\"'").lower()


def yes_probability(response: ModelResponse) -> float:
    """P(Yes) from first-token scores over {Yes, No}, else from the text itself."""
    if response.token_scores:
        yes = sum(math.exp(lp) for t, lp in response.token_scores if _normalize_token(t) == "yes")
        no = sum(math.exp(lp) for t, lp in response.token_scores if _normalize_token(t) == "no")
        if yes + no > 0:
            return yes / (yes + no)
    words = response.text.strip().lower().lstrip("\"'*").split()
    first = _normalize_token(words[0]) if words else ""
    if first == "yes":
        return 1.0
    if first == "no":
        return 0.0
    raise CapabilityError(MALFORMED, f"expected a Yes/No answer, got {response.text[:80]!r}")


def parse_category_output(text: str) -> list[str]:
    decoder = json.JSONDecoder()
    for start in (i for i, ch in enumerate(text) if ch == "{"):
        try:
            obj, _ = decoder.raw_decode(text, start)
        except ValueError:
            continue
        if isinstance(obj, dict) and isinstance(obj.get("output"), list):
            items = obj["output"]
            if all(isinstance(s, str) for s in items):
                seen: dict[str, None] = {}
                for s in items:
                    key = " ".join(s.lower().split())
                    if key:
                        seen.setdefault(key, None)
                return list(seen)
    raise CapabilityError(MALFORMED, f'no {{"output": [...]}} object in {text[:80]!r}')


class BackendSuite:
    """Every neural capability the pipeline needs, keyed by role."""

    def __init__(
        self,
        chat: Mapping[str, ChatModel],
        vision: Mapping[str, VisionService],
        depth_near_is_zero: bool = True,
    ):
        self.chat = dict(chat)
        self.vision = dict(vision)
        self.depth_near_is_zero = depth_near_is_zero

    def has(self, role: str) -> bool:
        return role in self.chat or role in self.vision

    def _chat(self, role: str, request: ModelRequest) -> ModelResponse:
        model = self.chat.get(role)
        if model is None:
            raise CapabilityUnavailable(role)
        response = model.complete(request)
        if looks_like_refusal(response.text):
            raise CapabilityError(REFUSAL, f"{role}: {response.text[:120]}")
        return response

    def _vision(self, role: str, request: VisionRequest) -> dict:
        service = self.vision.get(role)
        if service is None:
            raise CapabilityUnavailable(role)
        return service.call(request)

    # -- perception ---------------------------------------------------------

    def caption(self, image: Image.Image) -> str:
        response = self._chat(
            "captioner", ModelRequest(prompts.CAPTION_PROMPT, encode_image(image), max_tokens=512)
        )
        text = response.text.strip()
        if not text:
            raise CapabilityError(MALFORMED, "empty caption")
        return text

    def extract_categories(
        self, caption: str | None, query: str, feedback: str | None = None
    ) -> list[str]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        prompt = prompts.category_prompt(caption, query, feedback)
        return parse_category_output(self._chat("entity_extractor", ModelRequest(prompt)).text)

    def _parse_detections(self, data: dict, image: Image.Image) -> list[Detection]:
        try:
            raw = data["detections"]
            out = []
            for det in raw:
                box = clip_box(det["box"], image.width, image.height)
                if box is None:
                    continue
                conf, clamped = clamp_probability(float(det["confidence"]), "detector confidence")
                out.append(Detection(str(det["category"]), box, conf, clamped))
        except (KeyError, TypeError, ValueError) as exc:
            raise CapabilityError(MALFORMED, f"bad detector response: {exc}") from exc
        return out

    def detect_entities(self, image: Image.Image, categories: Sequence[str]) -> list[Detection]:
        if not categories:
            raise ValueError("categories must be non-empty")
        request = VisionRequest("detect", encode_image(image), {"categories": list(categories)})
        return self._parse_detections(self._vision("detector", request), image)

    def detect_fallback(self, image: Image.Image, query: str) -> Detection | None:
        request = VisionRequest("detect", encode_image(image), {"query": query})
        detections = self._parse_detections(self._vision("detector", request), image)
        if not detections:
            return None
        return max(detections, key=lambda d: d.confidence)

    # -- logic generation -----------------------------------------------------

    def score_attribute(self, image: Image.Image, box: BoundingBox, attribute_phrase: str) -> float:
        phrase = attribute_phrase.replace("_", " ").strip()
        if not phrase:
            raise CapabilityError(MALFORMED, "empty attribute phrase")
        crop = image.crop((box.x1, box.y1, box.x2, box.y2))
        request = ModelRequest(
            prompts.attribute_prompt(phrase), encode_image(crop), max_tokens=1, want_token_scores=True
        )
        p = yes_probability(self._chat("attribute_recognizer", request))
        return clamp_probability(p, "attribute score")[0]

    def score_relation_vlm(
        self,
        image: Image.Image,
        a: tuple[str, BoundingBox],
        b: tuple[str, BoundingBox],
        relation_phrase: str,
    ) -> float:
        if a == b:
            raise ValueError("relation needs two distinct entities")
        prompt = prompts.relation_prompt(
            a[0], a[1].as_list(), b[0], b[1].as_list(), relation_phrase.replace("_", " ")
        )
        request = ModelRequest(prompt, encode_image(image), max_tokens=1, want_token_scores=True)
        return yes_probability(self._chat("relation_recognizer", request))

    def estimate_depth(self, image: Image.Image) -> DepthField:
        data = self._vision("depth", VisionRequest("depth", encode_image(image)))
        try:
            d = data["depth"]
            w, h = int(d["w"]), int(d["h"])
            values = np.frombuffer(base64.b64decode(d["values_b64_f32"]), dtype="<f4")
        except (KeyError, TypeError, ValueError) as exc:
            raise CapabilityError(MALFORMED, f"bad depth response: {exc}") from exc
        if (w, h) != (image.width, image.height) or values.size != w * h:
            raise CapabilityError(
                MALFORMED, f"depth map {w}x{h} does not match image {image.width}x{image.height}"
            )
        if not np.all(np.isfinite(values)):
            raise CapabilityError(MALFORMED, "depth map contains non-finite values")
        return DepthField.from_raw(values.reshape(h, w), near_is_zero=self.depth_near_is_zero)

    def generate_logic(
        self,
        query: str,
        entity_facts: str,
        categories: Sequence[str],
        feedback: str | None = None,
    ) -> str:
        if not entity_facts.strip():
            raise ValueError("entity facts must be non-empty")
        prompt = prompts.logic_prompt(query, entity_facts, categories, feedback)
        return self._chat("logic_generator", ModelRequest(prompt, max_tokens=512)).text

    # -- answering -------------------------------------------------------------

    def validate_answer(self, annotated: AnnotatedImage, query: str) -> float:
        request = ModelRequest(
            prompts.answer_prompt(query), annotated.to_png(), max_tokens=1, want_token_scores=True
        )
        return yes_probability(self._chat("answerer", request))

    def segment_region(self, image: Image.Image, box: BoundingBox) -> Bitmask:
        if "segmenter" not in self.vision:
            raise CapabilityUnavailable("segmenter")
        data = self._vision(
            "segmenter", VisionRequest("segment", encode_image(image), {"box": box.as_list()})
        )
        try:
            m = data["mask"]
            mask = Bitmask.from_rle({"w": m["w"], "h": m["h"], "counts": m["rle_counts"]})
        except (KeyError, TypeError, DimensionMismatch) as exc:
            raise CapabilityError(MALFORMED, f"bad segmenter response: {exc}") from exc
        if (mask.width, mask.height) != (image.width, image.height):
            raise CapabilityError(MALFORMED, "mask size does not match image")
        return mask


def suite_from_configs(configs: Mapping[str, BackendConfig]) -> BackendSuite:
    """Live HTTP suite; every role except depth and segmenter must be configured."""
    missing = [r for r in CHAT_ROLES + VISION_ROLES if r not in configs and r not in OPTIONAL_ROLES]
    if missing:
        raise ValueError(f"no backend configured for roles: {', '.join(missing)}")
    chat = {r: OpenAIChatModel(configs[r]) for r in CHAT_ROLES}
    vision = {r: HttpVisionService(configs[r]) for r in VISION_ROLES if r in configs}
    near = configs["depth"].depth_near_is_zero if "depth" in configs else True
    return BackendSuite(chat, vision, depth_near_is_zero=near)


def recording_suite(inner: BackendSuite, store: ReplayStore) -> BackendSuite:
    chat = {r: RecordingChatModel(m, store, r) for r, m in inner.chat.items()}
    vision = {r: RecordingVisionService(s, store, r) for r, s in inner.vision.items()}
    return BackendSuite(chat, vision, depth_near_is_zero=inner.depth_near_is_zero)


def replay_suite(store: ReplayStore, roles: Sequence[str] | None = None) -> BackendSuite:
    """Suite answering only from recorded traffic.

    Optional roles are enabled only when the fixture contains traffic for them,
    unless ``roles`` says otherwise.
    """
    if roles is None:
        recorded = store.roles()
        roles = [r for r in CHAT_ROLES + VISION_ROLES if r not in OPTIONAL_ROLES or r in recorded]
    chat = {r: ReplayChatModel(store, r) for r in CHAT_ROLES if r in roles}
    vision = {r: ReplayVisionService(store, r) for r in VISION_ROLES if r in roles}
    return BackendSuite(chat, vision)
