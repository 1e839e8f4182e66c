"""Model-service capabilities: HTTP transports, record/replay, scripted stub."""

from .replay import ReplayCollision, ReplayStore
from .suite import (
    CHAT_ROLES,
    VISION_ROLES,
    BackendSuite,
    Detection,
    parse_category_output,
    recording_suite,
    replay_suite,
    suite_from_configs,
    yes_probability,
)
from .transport import HttpVisionService, OpenAIChatModel, looks_like_refusal
from .types import (
    MALFORMED,
    REFUSAL,
    TIMEOUT,
    TRANSPORT,
    BackendConfig,
    CapabilityError,
    CapabilityUnavailable,
    ModelRequest,
    ModelResponse,
    VisionRequest,
)

__all__ = [
    "MALFORMED",
    "REFUSAL",
    "TIMEOUT",
    "TRANSPORT",
    "CHAT_ROLES",
    "VISION_ROLES",
    "BackendConfig",
    "BackendSuite",
    "CapabilityError",
    "CapabilityUnavailable",
    "Detection",
    "HttpVisionService",
    "ModelRequest",
    "ModelResponse",
    "OpenAIChatModel",
    "ReplayCollision",
    "ReplayStore",
    "VisionRequest",
    "looks_like_refusal",
    "parse_category_output",
    "recording_suite",
    "replay_suite",
    "suite_from_configs",
    "yes_probability",
]
