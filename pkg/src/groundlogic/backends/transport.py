"""HTTP implementations of the chat and vision-service contracts."""

from __future__ import annotations

import logging
import os
import re

import httpx

from .types import (
    MALFORMED,
    REFUSAL,
    TIMEOUT,
    TRANSPORT,
    BackendConfig,
    CapabilityError,
    ModelRequest,
    ModelResponse,
    VisionRequest,
    b64,
)

log = logging.getLogger(__name__)

TOP_LOGPROBS = 5

_REFUSAL_PATTERNS = [
    re.compile(p, re.IGNORECASE)
    for p in (
        r"\bI(?:'m| am) sorry,? but I (?:can(?:no|')t|am unable to|won't)\b",
        r"\bI can(?:no|')t (?:help|assist|comply) with (?:that|this)\b",
        r"\b(?:content|usage) (?:management )?polic(?:y|ies)\b",
        r"\bviolates? (?:our|the|openai'?s?) (?:\w+ )?polic",
    )
]


def looks_like_refusal(text: str) -> bool:
    return any(p.search(text) for p in _REFUSAL_PATTERNS)


def _post_with_retries(client: httpx.Client, url: str, payload: dict, headers: dict, config: BackendConfig) -> dict:
    last: CapabilityError | None = None
    for attempt in range(config.retries + 1):
        try:
            resp = client.post(url, json=payload, headers=headers, timeout=config.timeout)
        except httpx.TimeoutException as exc:
            last = CapabilityError(TIMEOUT, f"{url}: {exc}")
        except httpx.TransportError as exc:
            last = CapabilityError(TRANSPORT, f"{url}: {exc}")
        else:
            if resp.status_code == 429 or resp.status_code >= 500:
                last = CapabilityError(TRANSPORT, f"{url}: HTTP {resp.status_code}")
            elif resp.status_code >= 400:
                raise CapabilityError(TRANSPORT, f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            else:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise CapabilityError(MALFORMED, f"{url}: response is not JSON") from exc
        log.warning("attempt %d/%d failed: %s", attempt + 1, config.retries + 1, last)
    assert last is not None
    raise last


def _headers(config: BackendConfig) -> dict:
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        token = os.environ.get(config.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
    return headers


class OpenAIChatModel:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self.client = client or httpx.Client()

    def build_payload(self, request: ModelRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": request.prompt}]
        if request.image is not None:
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{b64(request.image)}"},
                }
            )
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.want_token_scores:
            payload["logprobs"] = True
            payload["top_logprobs"] = TOP_LOGPROBS
        return payload

    def complete(self, request: ModelRequest) -> ModelResponse:
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        data = _post_with_retries(self.client, url, self.build_payload(request), _headers(self.config), self.config)
        return parse_chat_response(data)


def parse_chat_response(data: dict) -> ModelResponse:
    try:
        choice = data["choices"][0]
        message = choice["message"]
    except (KeyError, IndexError, TypeError) as exc:
        raise CapabilityError(MALFORMED, f"unexpected chat response shape: {str(data)[:200]}") from exc
    if message.get("refusal") or choice.get("finish_reason") == "content_filter":
        raise CapabilityError(REFUSAL, str(message.get("refusal") or "content filtered"))
    text = message.get("content") or ""

    scores = None
    content = (choice.get("logprobs") or {}).get("content") or []
    if content:
        first = content[0]
        top = first.get("top_logprobs") or [
            {"token": first.get("token", ""), "logprob": first.get("logprob", 0.0)}
        ]
        scores = tuple((str(t["token"]), float(t["logprob"])) for t in top)
    return ModelResponse(text, scores)


class HttpVisionService:
    """Client for the JSON detector / depth / segmenter services.

    Each call POSTs ``{"image_b64": <PNG>, ...params}`` to ``<endpoint>/<route>``:

    ``detect``   params ``{"categories": [...]}`` or ``{"query": "..."}``;
                 returns ``{"detections": [{"category", "box": [x1,y1,x2,y2], "confidence"}]}``
    ``depth``    no params; returns ``{"depth": {"w", "h", "values_b64_f32"}}``
                 (row-major little-endian float32)
    ``segment``  params ``{"box": [x1,y1,x2,y2]}``; returns
                 ``{"mask": {"w", "h", "rle_counts": [...]}}`` (column-major COCO runs)
    """

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self.client = client or httpx.Client()

    def call(self, request: VisionRequest) -> dict:
        url = f"{self.config.endpoint.rstrip('/')}/{request.route}"
        payload = {"image_b64": b64(request.image), **request.params}
        return _post_with_retries(self.client, url, payload, _headers(self.config), self.config)
