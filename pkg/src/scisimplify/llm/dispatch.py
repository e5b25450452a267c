"""Concurrent, rate-limited dispatch of planned batches with per-chunk checkpoints."""

from __future__ import annotations

import json
import logging
import os
import random
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError
from ..postprocess import ListParseError, parse_list_response_with_method
from .planning import BatchPlan, DispatchConfig, PromptBatch
from .prompts import build_prompt, prompt_digest
from .providers import ChatProvider, ProviderError, ProviderRateLimitError
from .ratelimit import Clock, MonotonicClock, RateBudget, RateLimiter, estimate_tokens

log = logging.getLogger(__name__)


@dataclass
class RawBatchResponse:
    batch_id: int
    chunk_id: int
    status: str  # "ok" or "failed"
    raw: str | None = None
    items: list[str] | None = None
    parse_method: str | None = None
    attempts: int = 0
    errors: list[str] = field(default_factory=list)
    send_times: list[float] = field(default_factory=list)
    estimated_tokens: int = 0
    resumed: bool = False

    @property
    def retries(self) -> int:
        return max(self.attempts - 1, 0)


@dataclass
class DispatchResult:
    responses: list[RawBatchResponse]
    provider_calls: int
    send_log: list[tuple[float, int]]

    @property
    def failed(self) -> list[RawBatchResponse]:
        return [r for r in self.responses if r.status != "ok"]

    def by_batch(self) -> dict[int, RawBatchResponse]:
        return {r.batch_id: r for r in self.responses}


def checkpoint_path(directory: str | Path, chunk_id: int) -> Path:
    return Path(directory) / f"chunk-{chunk_id:03d}.jsonl"


def load_checkpoints(directory: str | Path) -> dict[int, dict]:
    """Completed batches recorded under ``directory``; a torn last line is ignored."""
    done = {}
    for file in sorted(Path(directory).glob("chunk-*.jsonl")):
        for line in file.read_text(encoding="utf-8").splitlines():
            try:
                entry = json.loads(line)
                done[int(entry["batch_id"])] = entry
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                log.warning("ignoring unreadable checkpoint line in %s", file)
    return done


class _CheckpointWriter:
    def __init__(self, directory: Path | None, fresh: bool):
        self.directory = directory
        self._lock = threading.Lock()
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)
            if fresh:
                for old in directory.glob("chunk-*.jsonl"):
                    old.unlink()

    def record(self, batch: PromptBatch, digest: str, response: RawBatchResponse) -> None:
        if self.directory is None:
            return
        line = json.dumps(
            {
                "batch_id": batch.batch_id,
                "chunk_id": batch.chunk_id,
                "prompt_sha256": digest,
                "attempts": response.attempts,
                "raw": response.raw,
            },
            ensure_ascii=False,
        )
        path = checkpoint_path(self.directory, batch.chunk_id)
        with self._lock:
            torn = _ends_torn(path)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(("\n" if torn else "") + line + "\n")
                fh.flush()
                os.fsync(fh.fileno())


def _ends_torn(path: Path) -> bool:
    if not path.exists() or path.stat().st_size == 0:
        return False
    with open(path, "rb") as fh:
        fh.seek(-1, os.SEEK_END)
        return fh.read(1) != b"\n"


def batch_token_estimate(batch: PromptBatch, config: DispatchConfig) -> int:
    system, user = build_prompt(batch)
    return estimate_tokens(system + user) + config.response_token_cap


def _send(
    batch: PromptBatch,
    provider: ChatProvider,
    limiter: RateLimiter,
    config: DispatchConfig,
    clock: Clock,
    counter: list[int],
    counter_lock: threading.Lock,
) -> RawBatchResponse:
    system, user = build_prompt(batch)
    tokens = estimate_tokens(system + user) + config.response_token_cap
    response = RawBatchResponse(batch.batch_id, batch.chunk_id, "failed", estimated_tokens=tokens)
    rng = random.Random(config.shuffle_seed * 1_000_003 + batch.batch_id)
    for attempt in range(config.max_retries + 1):
        if attempt:
            delay = config.backoff_base_s * config.backoff_factor ** (attempt - 1)
            clock.sleep(delay * (1 + config.backoff_jitter * rng.random()))
        response.send_times.append(limiter.acquire(tokens))
        response.attempts += 1
        with counter_lock:
            counter[0] += 1
        try:
            raw = provider.complete(system, user, config.model, config.response_token_cap)
            items, method = parse_list_response_with_method(raw, len(batch.items))
        except ProviderRateLimitError as exc:
            limiter.pause(exc.retry_after or config.backoff_base_s)
            response.errors.append(f"batch {batch.batch_id}: {exc}")
            continue
        except (ProviderError, ListParseError) as exc:
            response.errors.append(f"batch {batch.batch_id}: {type(exc).__name__}: {exc}")
            continue
        response.status, response.raw = "ok", raw
        response.items, response.parse_method = items, method
        return response
    log.warning("batch %d failed after %d attempts: %s", batch.batch_id, response.attempts, response.errors[-1])
    return response


def _from_checkpoint(batch: PromptBatch, entry: dict) -> RawBatchResponse | None:
    system, user = build_prompt(batch)
    if entry.get("prompt_sha256") != prompt_digest(system, user):
        log.warning("checkpoint for batch %d does not match the current plan; re-sending", batch.batch_id)
        return None
    try:
        items, method = parse_list_response_with_method(entry["raw"], len(batch.items))
    except (ListParseError, TypeError, KeyError):
        return None
    return RawBatchResponse(
        batch.batch_id,
        batch.chunk_id,
        "ok",
        raw=entry["raw"],
        items=items,
        parse_method=method,
        attempts=int(entry.get("attempts", 1)),
        resumed=True,
    )


def dispatch(
    plan: BatchPlan,
    provider: ChatProvider,
    budget: RateBudget,
    config: DispatchConfig,
    clock: Clock | None = None,
    checkpoint_dir: str | Path | None = None,
    resume: bool = False,
) -> DispatchResult:
    """Send every batch of ``plan`` and collect the parsed replies, ordered by batch id.

    Chunks run one after another; inside a chunk up to ``worker_count`` batches
    are in flight. Every attempt, retries included, first reserves one request
    and the batch's estimated tokens from the shared limiter. A batch whose
    reply cannot be split into the right number of items is retried like a
    transport failure. Batches still failing after ``max_retries`` retries are
    reported as failed and the run continues.

    With ``checkpoint_dir`` each successful batch is appended to its chunk's
    checkpoint file; with ``resume`` batches already recorded there are not
    sent again.
    """
    config.validate()
    if not isinstance(budget, RateBudget):
        raise ConfigError("budget must be a RateBudget")
    clock = clock or MonotonicClock()
    limiter = RateLimiter(budget, clock)
    for batch in plan.batches:
        if batch_token_estimate(batch, config) > budget.max_tokens_per_minute:
            raise ConfigError(
                f"batch {batch.batch_id} needs more tokens than the per-minute budget allows"
            )

    directory = Path(checkpoint_dir) if checkpoint_dir is not None else None
    done = load_checkpoints(directory) if (resume and directory and directory.exists()) else {}
    writer = _CheckpointWriter(directory, fresh=not resume)
    counter, counter_lock = [0], threading.Lock()
    responses: list[RawBatchResponse] = []

    pool = ThreadPoolExecutor(max_workers=config.worker_count)
    try:
        for chunk in plan.chunks:
            futures = {}
            for batch in chunk:
                cached = _from_checkpoint(batch, done[batch.batch_id]) if batch.batch_id in done else None
                if cached is not None:
                    responses.append(cached)
                    continue
                future = pool.submit(_send, batch, provider, limiter, config, clock, counter, counter_lock)
                futures[future] = batch
            try:
                for future in as_completed(futures):
                    batch = futures.pop(future)
                    response = future.result()
                    if response.status == "ok":
                        writer.record(batch, prompt_digest(*build_prompt(batch)), response)
                    responses.append(response)
            except BaseException:
                pool.shutdown(wait=True, cancel_futures=True)
                # keep whatever finished before the crash
                for future, batch in futures.items():
                    if future.done() and not future.cancelled() and future.exception() is None:
                        response = future.result()
                        if response.status == "ok":
                            writer.record(batch, prompt_digest(*build_prompt(batch)), response)
                raise
    finally:
        pool.shutdown(wait=True)

    responses.sort(key=lambda r: r.batch_id)
    return DispatchResult(responses, counter[0], sorted(limiter.log))
