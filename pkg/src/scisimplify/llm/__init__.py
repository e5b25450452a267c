"""Batched, rate-limited simplification requests to a chat-completion model."""

from .dispatch import DispatchResult, RawBatchResponse, dispatch, load_checkpoints
from .planning import BatchPlan, DispatchConfig, PromptBatch, plan_batches
from .prompts import build_prompt, system_prompt, user_message
from .providers import (
    ChatProvider,
    EmptyResponseError,
    MockProvider,
    OpenAIChatProvider,
    ProviderError,
    ProviderHTTPError,
    ProviderRateLimitError,
    ProviderTransportError,
    ReplayProvider,
    ScriptedProvider,
)
from .ratelimit import MonotonicClock, RateBudget, RateLimiter, VirtualClock, estimate_tokens

__all__ = [
    "BatchPlan",
    "ChatProvider",
    "DispatchConfig",
    "DispatchResult",
    "EmptyResponseError",
    "MockProvider",
    "MonotonicClock",
    "OpenAIChatProvider",
    "PromptBatch",
    "ProviderError",
    "ProviderHTTPError",
    "ProviderRateLimitError",
    "ProviderTransportError",
    "RateBudget",
    "RateLimiter",
    "RawBatchResponse",
    "ReplayProvider",
    "ScriptedProvider",
    "VirtualClock",
    "build_prompt",
    "dispatch",
    "estimate_tokens",
    "load_checkpoints",
    "plan_batches",
    "system_prompt",
    "user_message",
]
