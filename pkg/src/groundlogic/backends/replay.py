"""Record/replay of backend traffic for hermetic runs.

A fixture is a directory holding ``index.json`` (record order, for audit) and
one ``records/<digest>.json`` file per distinct request.  The digest hashes
the prompt, the decoded image pixels and the request parameters, so replays do
not depend on the PNG encoder that produced the image bytes.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any, Sequence

from .types import (
    TRANSPORT,
    CapabilityError,
    ChatModel,
    ModelRequest,
    ModelResponse,
    VisionRequest,
    VisionService,
    canonical_json,
    pixel_digest,
)

FIXTURE_VERSION = 1


class ReplayCollision(Exception):
    """Two different requests produced the same digest, or one request two answers."""


def chat_request_summary(request: ModelRequest) -> dict:
    return {
        "kind": "chat",
        "prompt": request.prompt,
        "image": pixel_digest(request.image) if request.image is not None else None,
        "max_tokens": request.max_tokens,
        "want_token_scores": request.want_token_scores,
        "temperature": request.temperature,
    }


def vision_request_summary(request: VisionRequest) -> dict:
    return {
        "kind": "vision",
        "route": request.route,
        "image": pixel_digest(request.image),
        "params": dict(request.params),
    }


def digest_of(summary: dict) -> str:
    return hashlib.sha256(canonical_json(summary).encode("utf-8")).hexdigest()


class ReplayStore:
    """Records live in ``directory``; ``extra`` directories are loaded read-only."""

    def __init__(self, directory: str | Path, extra: Sequence[str | Path] = ()):
        self.directory = Path(directory)
        self._records: dict[str, dict] = {}
        self._order: list[dict] = []
        self._extra_roles: set[str] = set()
        self._lock = threading.Lock()
        self._load(self.directory, self._order)
        for d in extra:
            entries: list[dict] = []
            self._load(Path(d), entries)
            self._extra_roles.update(e["role"] for e in entries)

    def _load(self, directory: Path, order: list[dict]) -> None:
        index = directory / "index.json"
        if not index.exists():
            return
        meta = json.loads(index.read_text())
        if meta.get("version") != FIXTURE_VERSION:
            raise ValueError(f"{index}: unsupported fixture version {meta.get('version')}")
        for entry in meta["records"]:
            record = json.loads((directory / "records" / f"{entry['digest']}.json").read_text())
            existing = self._records.get(entry["digest"])
            if existing is not None and existing != record:
                raise ReplayCollision(f"fixtures disagree on request {entry['digest'][:12]}")
            self._records[entry["digest"]] = record
            order.append(entry)

    def __len__(self) -> int:
        return len(self._records)

    def roles(self) -> set[str]:
        return {entry["role"] for entry in self._order} | self._extra_roles

    def lookup(self, summary: dict) -> dict:
        digest = digest_of(summary)
        record = self._records.get(digest)
        if record is None:
            raise CapabilityError(TRANSPORT, f"no recorded response for request {digest[:12]}")
        if record["request_summary"] != summary:
            raise ReplayCollision(f"digest {digest} maps to a different request")
        return record["response"]

    def record(self, role: str, summary: dict, response: dict) -> None:
        digest = digest_of(summary)
        with self._lock:
            existing = self._records.get(digest)
            if existing is not None:
                if existing["request_summary"] != summary:
                    raise ReplayCollision(f"digest {digest} already used by a different request")
                if existing["response"] != response:
                    raise ReplayCollision(f"request {digest[:12]} answered differently twice")
                return
            record = {
                "digest": digest,
                "role": role,
                "request_summary": summary,
                "response": response,
            }
            self._records[digest] = record
            self._order.append({"digest": digest, "role": role})
            records_dir = self.directory / "records"
            records_dir.mkdir(parents=True, exist_ok=True)
            (records_dir / f"{digest}.json").write_text(_dump(record))
            (self.directory / "index.json").write_text(
                _dump({"version": FIXTURE_VERSION, "records": self._order})
            )


def _dump(value: Any) -> str:
    return json.dumps(value, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _encode_outcome(fn) -> dict:
    try:
        return {"ok": fn()}
    except CapabilityError as exc:
        return {"error": exc.to_dict()}


def _decode_outcome(outcome: dict):
    if "error" in outcome:
        raise CapabilityError(outcome["error"]["kind"], outcome["error"]["detail"])
    return outcome["ok"]


class RecordingChatModel:
    def __init__(self, inner: ChatModel, store: ReplayStore, role: str):
        self.inner, self.store, self.role = inner, store, role

    def complete(self, request: ModelRequest) -> ModelResponse:
        outcome = _encode_outcome(lambda: self.inner.complete(request).to_dict())
        self.store.record(self.role, chat_request_summary(request), outcome)
        return ModelResponse.from_dict(_decode_outcome(outcome))


class ReplayChatModel:
    def __init__(self, store: ReplayStore, role: str):
        self.store, self.role = store, role

    def complete(self, request: ModelRequest) -> ModelResponse:
        outcome = self.store.lookup(chat_request_summary(request))
        return ModelResponse.from_dict(_decode_outcome(outcome))


class RecordingVisionService:
    def __init__(self, inner: VisionService, store: ReplayStore, role: str):
        self.inner, self.store, self.role = inner, store, role

    def call(self, request: VisionRequest) -> dict:
        outcome = _encode_outcome(lambda: self.inner.call(request))
        self.store.record(self.role, vision_request_summary(request), outcome)
        return _decode_outcome(outcome)


class ReplayVisionService:
    def __init__(self, store: ReplayStore, role: str):
        self.store, self.role = store, role

    def call(self, request: VisionRequest) -> dict:
        return _decode_outcome(self.store.lookup(vision_request_summary(request)))
