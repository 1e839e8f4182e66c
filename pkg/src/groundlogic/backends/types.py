from __future__ import annotations

import base64
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from PIL import Image

TRANSPORT = "Transport"
TIMEOUT = "Timeout"
MALFORMED = "MalformedOutput"
REFUSAL = "ContentPolicyRefusal"
ERROR_KINDS = (TRANSPORT, TIMEOUT, MALFORMED, REFUSAL)


class CapabilityError(Exception):
    def __init__(self, kind: str, detail: str):
        if kind not in ERROR_KINDS:
            raise ValueError(f"unknown capability error kind {kind!r}")
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail

    @property
    def terminal(self) -> bool:
        """Refusals are never retried."""
        return self.kind == REFUSAL

    def to_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


class CapabilityUnavailable(Exception):
    """The backend suite has no implementation for an optional capability."""


@dataclass(frozen=True)
class ModelRequest:
    prompt: str
    image: bytes | None = None  # PNG
    max_tokens: int = 256
    want_token_scores: bool = False
    temperature: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    token_scores: tuple[tuple[str, float], ...] | None = None

    def to_dict(self) -> dict:
        scores = None if self.token_scores is None else [list(t) for t in self.token_scores]
        return {"text": self.text, "token_scores": scores}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelResponse":
        scores = data.get("token_scores")
        return cls(
            data["text"],
            None if scores is None else tuple((str(t), float(lp)) for t, lp in scores),
        )


@dataclass(frozen=True)
class VisionRequest:
    """A call to a detector, depth estimator or segmenter service."""

    route: str  # "detect" | "depth" | "segment"
    image: bytes  # PNG
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str = ""
    api_key_env: str | None = None
    timeout: float = 60.0
    retries: int = 2
    depth_near_is_zero: bool = True

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


class ChatModel(Protocol):
    def complete(self, request: ModelRequest) -> ModelResponse: ...


class VisionService(Protocol):
    def call(self, request: VisionRequest) -> dict: ...


def encode_image(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.convert("RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def decode_image(data: bytes) -> Image.Image:
    image = Image.open(io.BytesIO(data))
    image.load()
    return image.convert("RGB")


def pixel_digest(png: bytes) -> str:
    """Hash of decoded pixels, stable across PNG encoder versions."""
    image = decode_image(png)
    h = hashlib.sha256()
    h.update(f"{image.mode}:{image.width}x{image.height}:".encode())
    h.update(image.tobytes())
    return h.hexdigest()


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
