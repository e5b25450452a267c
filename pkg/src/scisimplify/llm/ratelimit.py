"""Sliding-window request/token budget shared by all dispatch workers."""

from __future__ import annotations

import math
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Protocol

from ..errors import ConfigError


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...

    def sleep_until(self, t: float) -> None: ...


class MonotonicClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def sleep_until(self, t: float) -> None:
        self.sleep(t - self.now())


class VirtualClock:
    """A clock that only moves when someone sleeps; sleeping never blocks."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        if seconds <= 0:
            return
        with self._lock:
            self._now += seconds

    def sleep_until(self, t: float) -> None:
        with self._lock:
            self._now = max(self._now, t)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class RateBudget:
    max_requests_per_minute: int = 3500
    max_tokens_per_minute: int = 90000
    window_s: float = 60.0
    # extra spacing that absorbs scheduling jitter between reservation and actual send
    safety_margin_s: float = 0.0

    def __post_init__(self):
        problems = []
        if self.max_requests_per_minute <= 0:
            problems.append("max_requests_per_minute must be positive")
        if self.max_tokens_per_minute <= 0:
            problems.append("max_tokens_per_minute must be positive")
        if self.window_s <= 0:
            problems.append("window_s must be positive")
        if self.safety_margin_s < 0:
            problems.append("safety_margin_s must be non-negative")
        if problems:
            raise ConfigError(problems)


class RateLimiter:
    """Hands out send times so that no window of ``window_s`` seconds holds more
    than the budgeted requests or estimated tokens.

    Reservations are granted in non-decreasing time order. With that ordering a
    window can only be overfilled by the newest send, so checking the window
    that ends at each new reservation is enough to keep every window in budget.
    """

    def __init__(self, budget: RateBudget, clock: Clock | None = None):
        self.budget = budget
        self.clock = clock or MonotonicClock()
        self._lock = threading.Lock()
        self._events: deque[tuple[float, int]] = deque()
        self._window_tokens = 0
        self._last = -math.inf
        self._paused_until = -math.inf
        self.log: list[tuple[float, int]] = []

    def reserve(self, tokens: int) -> float:
        if tokens > self.budget.max_tokens_per_minute:
            raise ConfigError(
                f"a single request needs {tokens} tokens, more than the "
                f"{self.budget.max_tokens_per_minute} tokens/minute budget"
            )
        span = self.budget.window_s + self.budget.safety_margin_s
        with self._lock:
            t = max(self.clock.now(), self._last, self._paused_until)
            while True:
                while self._events and self._events[0][0] + span <= t:
                    self._window_tokens -= self._events.popleft()[1]
                if (
                    len(self._events) < self.budget.max_requests_per_minute
                    and self._window_tokens + tokens <= self.budget.max_tokens_per_minute
                ):
                    break
                t = self._events[0][0] + span
            self._events.append((t, tokens))
            self._window_tokens += tokens
            self._last = t
            self.log.append((t, tokens))
            return t

    def acquire(self, tokens: int) -> float:
        """Block (on the limiter's clock) until ``tokens`` may be sent; return the send time."""
        t = self.reserve(tokens)
        self.clock.sleep_until(t)
        return t

    def pause(self, seconds: float) -> None:
        """Hold back all new reservations, e.g. after the server reported a rate-limit hit."""
        with self._lock:
            self._paused_until = max(self._paused_until, self.clock.now() + seconds)


def max_in_window(times_and_tokens, window_s: float = 60.0) -> tuple[int, int]:
    """Largest request count and token sum seen in any half-open window of ``window_s``."""
    events = sorted(times_and_tokens)
    best_requests = best_tokens = 0
    lo = 0
    tokens = 0
    for hi, (t, n) in enumerate(events):
        tokens += n
        while events[lo][0] + window_s <= t:
            tokens -= events[lo][1]
            lo += 1
        best_requests = max(best_requests, hi - lo + 1)
        best_tokens = max(best_tokens, tokens)
    return best_requests, best_tokens
