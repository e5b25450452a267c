"""Chat-completion backends: a live HTTP client, deterministic mocks, and replay."""

from __future__ import annotations

import json
import os
import re
import threading
from collections import deque
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx

from .prompts import prompt_digest


class ProviderError(Exception):
    pass


class ProviderTransportError(ProviderError):
    pass


class ProviderHTTPError(ProviderError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class ProviderRateLimitError(ProviderHTTPError):
    def __init__(self, status: int = 429, body: str = "", retry_after: float | None = None):
        super().__init__(status, body)
        self.retry_after = retry_after


class EmptyResponseError(ProviderError):
    pass


class ChatProvider(Protocol):
    def complete(
        self, system_message: str, user_message: str, model: str, response_token_cap: int
    ) -> str: ...


class OpenAIChatProvider:
    """Speaks the chat-completions JSON protocol over HTTP(S)."""

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout_s: float = 120.0,
        extra_params: dict | None = None,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.extra_params = dict(extra_params or {})
        self._client = client or httpx.Client(timeout=timeout_s)

    @classmethod
    def from_env(cls, endpoint: str, env_var: str = "OPENAI_API_KEY", **kwargs) -> OpenAIChatProvider:
        return cls(endpoint, os.environ.get(env_var), **kwargs)

    def complete(self, system_message, user_message, model, response_token_cap):
        payload = {
            "model": model,
            "messages": [
                {"role": "system", "content": system_message},
                {"role": "user", "content": user_message},
            ],
            "max_tokens": response_token_cap,
            **self.extra_params,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._client.post(self.endpoint, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise ProviderTransportError(f"{type(exc).__name__}: {exc}") from exc

        if response.status_code == 429:
            retry_after = response.headers.get("retry-after")
            try:
                retry_after = float(retry_after) if retry_after else None
            except ValueError:
                retry_after = None
            raise ProviderRateLimitError(429, response.text, retry_after)
        if not 200 <= response.status_code < 300:
            raise ProviderHTTPError(response.status_code, response.text)
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EmptyResponseError(f"unexpected response body: {exc}") from None
        if not content or not content.strip():
            raise EmptyResponseError("model returned an empty message")
        return content

    def close(self):
        self._client.close()


_ITEM = re.compile(r"^(\d+)\. (.*)$")


def prompt_items(user_message: str) -> list[str]:
    """Recover the texts from a user message built by :func:`prompts.user_message`."""
    items = []
    for line in user_message.split("\n"):
        match = _ITEM.match(line)
        if match:
            items.append(match.group(2))
    return items


class MockProvider:
    """Answers every request by transforming each listed text; fully deterministic.

    ``style`` picks the list layout of the reply ("enumerated", "dashed" or
    "blankline") so callers can exercise every parser path.
    """

    def __init__(self, transform: Callable[[str], str] | None = None, style: str = "enumerated"):
        if style not in ("enumerated", "dashed", "blankline"):
            raise ValueError(f"unknown reply style {style!r}")
        self.transform = transform or (lambda text: text)
        self.style = style
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, system_message, user_message, model, response_token_cap):
        with self._lock:
            self.calls += 1
        items = [self.transform(t) for t in prompt_items(user_message)]
        if self.style == "enumerated":
            return "\n".join(f"{i}. {t}" for i, t in enumerate(items, start=1))
        if self.style == "dashed":
            return "\n".join(f"- {t}" for t in items)
        return "\n\n".join(items)


class ScriptedProvider:
    """Replies from a fixed script; exceptions in the script are raised instead of returned."""

    def __init__(self, script: Iterable[str | BaseException]):
        self._script = deque(script)
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, system_message, user_message, model, response_token_cap):
        with self._lock:
            self.calls += 1
            if not self._script:
                raise ProviderError("script exhausted")
            step = self._script.popleft()
        if isinstance(step, BaseException):
            raise step
        return step


class ReplayProvider:
    """Serves responses recorded in checkpoint files, matched on the exact prompt."""

    def __init__(self, recordings: dict[str, str]):
        self.recordings = recordings
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_checkpoints(cls, paths: Iterable[str | Path]) -> ReplayProvider:
        recordings = {}
        for path in paths:
            path = Path(path)
            files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
            for file in files:
                for line in file.read_text(encoding="utf-8").splitlines():
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError:
                        continue
                    recordings[entry["prompt_sha256"]] = entry["raw"]
        return cls(recordings)

    def complete(self, system_message, user_message, model, response_token_cap):
        with self._lock:
            self.calls += 1
        key = prompt_digest(system_message, user_message)
        if key not in self.recordings:
            raise ProviderError(f"no recorded response for prompt {key[:12]}")
        return self.recordings[key]
