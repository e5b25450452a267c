from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import ConfigError

DEFAULT_MODEL = "gpt-3.5-turbo-0301"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"


@dataclass
class DispatchConfig:
    chunk_count: int = 15
    worker_count: int = 75
    batch_size: int = 10
    shuffle_seed: int = 0
    max_retries: int = 3
    endpoint: str = DEFAULT_ENDPOINT
    model: str = DEFAULT_MODEL
    response_token_cap: int = 1024
    backoff_base_s: float = 2.0
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.25
    api_key_env: str = "OPENAI_API_KEY"
    request_timeout_s: float = 120.0
    price_per_1k_tokens: float = 0.002

    def problems(self) -> list[str]:
        found = []
        for name in ("chunk_count", "worker_count", "batch_size", "response_token_cap"):
            if getattr(self, name) < 1:
                found.append(f"{name} must be at least 1")
        if self.max_retries < 0:
            found.append("max_retries must be non-negative")
        if self.backoff_base_s < 0 or self.backoff_factor < 1:
            found.append("backoff_base_s must be >= 0 and backoff_factor >= 1")
        return found

    def validate(self) -> None:
        if self.problems():
            raise ConfigError(self.problems())


@dataclass
class PromptBatch:
    batch_id: int
    items: list[str]
    origin_indices: list[int]
    chunk_id: int = 0

    def __post_init__(self):
        if len(self.items) != len(self.origin_indices):
            raise ValueError("items and origin_indices differ in length")


@dataclass
class BatchPlan:
    chunks: list[list[PromptBatch]] = field(default_factory=list)
    size: int = 0
    seed: int = 0

    @property
    def batches(self) -> list[PromptBatch]:
        return [b for chunk in self.chunks for b in chunk]

    def realign(self, per_batch: dict[int, Sequence]) -> list:
        """Put per-batch item lists back into original record order.

        Positions whose batch is missing from ``per_batch`` stay ``None``.
        """
        out = [None] * self.size
        for batch in self.batches:
            values = per_batch.get(batch.batch_id)
            if values is None:
                continue
            for index, value in zip(batch.origin_indices, values):
                out[index] = value
        return out


def plan_batches(texts: Sequence[str], config: DispatchConfig) -> BatchPlan:
    """Shuffle texts with the configured seed, cut them into batches, group batches into chunks.

    Chunks are contiguous runs of batches whose sizes differ by at most one.
    """
    config.validate()
    if not texts:
        raise ValueError("nothing to plan: no texts")
    order = list(range(len(texts)))
    random.Random(config.shuffle_seed).shuffle(order)

    batches = []
    for batch_id, start in enumerate(range(0, len(order), config.batch_size)):
        indices = order[start:start + config.batch_size]
        batches.append(PromptBatch(batch_id, [texts[i] for i in indices], indices))

    n_chunks = min(config.chunk_count, len(batches))
    base, extra = divmod(len(batches), n_chunks)
    chunks, pos = [], 0
    for chunk_id in range(n_chunks):
        size = base + (1 if chunk_id < extra else 0)
        chunk = batches[pos:pos + size]
        for batch in chunk:
            batch.chunk_id = chunk_id
        chunks.append(chunk)
        pos += size
    return BatchPlan(chunks, len(texts), config.shuffle_seed)
