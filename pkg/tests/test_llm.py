import json
import socket

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scisimplify.errors import ConfigError
from scisimplify.llm import (
    DispatchConfig,
    MockProvider,
    OpenAIChatProvider,
    ProviderHTTPError,
    ProviderRateLimitError,
    ProviderTransportError,
    PromptBatch,
    RateBudget,
    RateLimiter,
    ReplayProvider,
    ScriptedProvider,
    VirtualClock,
    build_prompt,
    dispatch,
    load_checkpoints,
    plan_batches,
    system_prompt,
    user_message,
)
from scisimplify.llm.dispatch import checkpoint_path
from scisimplify.llm.providers import EmptyResponseError, prompt_items
from scisimplify.llm.ratelimit import estimate_tokens, max_in_window

PAPER_PROMPT_10 = (
    "You are given 10 texts, TREAT THEM SEPARATELY.\n"
    "Complex technical or scientific terms are indicated by square brackets "
    "(e.g. [convolutional neural network]).\n"
    "For each text, replace or explain the terms in square brackets to make it understandable "
    "to non-experts and to simplify for non-expert readers.\n"
    "Make sure that you return exactly one enumerated list of 10 simplified texts and that "
    "all terms in square brackets are simplified or explained!"
)


def texts(n):
    return [f"Text {i} about [proteome] analysis." for i in range(n)]


def fast_config(**overrides):
    values = dict(chunk_count=2, worker_count=4, batch_size=10, backoff_base_s=0.0, backoff_jitter=0.0)
    values.update(overrides)
    return DispatchConfig(**values)


def brute_force_window_violations(sends, window_s, max_requests, max_tokens):
    """Check the window starting at every send time, plus every window ending just after one."""
    violations = 0
    starts = {t for t, _ in sends} | {t - window_s + 1e-9 for t, _ in sends}
    for start in starts:
        inside = [n for t, n in sends if start <= t < start + window_s]
        if len(inside) > max_requests or sum(inside) > max_tokens:
            violations += 1
    return violations


# --- prompts --------------------------------------------------------------------


def test_system_prompt_is_verbatim_for_ten_texts():
    assert system_prompt(10) == PAPER_PROMPT_10


def test_system_prompt_for_one_text():
    prompt = system_prompt(1)
    assert prompt.startswith("You are given 1 text, TREAT THEM SEPARATELY.")
    assert "enumerated list of 1 simplified text and" in prompt


def test_user_message_enumerates_and_collapses_newlines():
    assert user_message(["A", "B"]) == "1. A\n2. B"
    assert user_message(["line one\nline two"]) == "1. line one line two"


def test_prompt_round_trips_through_mock_parser():
    items = ["first [thing]", "second"]
    _, user = build_prompt(PromptBatch(0, items, [0, 1]))
    assert prompt_items(user) == items


def test_query_text_is_never_sent():
    batch = PromptBatch(0, ["The [proteome] scale."], [0])
    system, user = build_prompt(batch)
    assert "digital assistant" not in system + user
    assert "query" not in (system + user).lower()


def test_empty_batch_has_no_prompt():
    with pytest.raises(ValueError):
        build_prompt(PromptBatch(3, [], []))


# --- planning -------------------------------------------------------------------


@settings(max_examples=50)
@given(st.integers(1, 120), st.integers(1, 12), st.integers(1, 20), st.integers(0, 10_000))
def test_plan_is_a_permutation_in_bounded_batches(n, batch_size, chunk_count, seed):
    config = DispatchConfig(batch_size=batch_size, chunk_count=chunk_count, shuffle_seed=seed)
    plan = plan_batches([str(i) for i in range(n)], config)
    indices = [i for b in plan.batches for i in b.origin_indices]
    assert sorted(indices) == list(range(n))
    assert all(1 <= len(b.items) <= batch_size for b in plan.batches)
    assert all(len(b.items) == batch_size for b in plan.batches[:-1])
    sizes = [len(c) for c in plan.chunks]
    assert max(sizes) - min(sizes) <= 1
    assert [b.batch_id for b in plan.batches] == list(range(len(plan.batches)))
    assert plan.realign({b.batch_id: b.items for b in plan.batches}) == [str(i) for i in range(n)]


def test_plan_short_tail_batch():
    plan = plan_batches(texts(25), DispatchConfig(batch_size=10))
    assert [len(b.items) for b in plan.batches] == [10, 10, 5]


def test_plan_is_seed_deterministic():
    a = plan_batches(texts(40), DispatchConfig(shuffle_seed=7))
    b = plan_batches(texts(40), DispatchConfig(shuffle_seed=7))
    c = plan_batches(texts(40), DispatchConfig(shuffle_seed=8))
    order = lambda plan: [b.origin_indices for b in plan.batches]  # noqa: E731
    assert order(a) == order(b)
    assert order(a) != order(c)


def test_plan_rejects_empty_input_and_bad_config():
    with pytest.raises(ValueError):
        plan_batches([], DispatchConfig())
    with pytest.raises(ConfigError) as info:
        plan_batches(["a"], DispatchConfig(batch_size=0, worker_count=0))
    assert len(info.value.problems) == 2


# --- rate limiter ---------------------------------------------------------------


def test_limiter_two_per_minute_five_batches():
    clock = VirtualClock()
    limiter = RateLimiter(RateBudget(2, 90_000), clock)
    times = [limiter.acquire(10) for _ in range(5)]
    assert times == [0.0, 0.0, 60.0, 60.0, 120.0]
    sends = [(t, 10) for t in times]
    assert brute_force_window_violations(sends, 60.0, 2, 90_000) == 0


def test_limiter_token_budget():
    clock = VirtualClock()
    limiter = RateLimiter(RateBudget(100, 1000), clock)
    times = [limiter.acquire(400) for _ in range(4)]
    assert times == [0.0, 0.0, 60.0, 60.0]
    with pytest.raises(ConfigError):
        limiter.reserve(1001)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 5),
    st.integers(50, 500),
    st.lists(st.tuples(st.floats(0, 30), st.integers(1, 50)), min_size=1, max_size=40),
)
def test_limiter_against_brute_force(max_requests, max_tokens, steps):
    clock = VirtualClock()
    limiter = RateLimiter(RateBudget(max_requests, max_tokens), clock)
    for gap, tokens in steps:
        clock.sleep(gap)
        limiter.acquire(tokens)
    assert brute_force_window_violations(limiter.log, 60.0, max_requests, max_tokens) == 0
    peak_requests, peak_tokens = max_in_window(limiter.log)
    assert peak_requests <= max_requests and peak_tokens <= max_tokens


def test_pause_holds_back_reservations():
    clock = VirtualClock()
    limiter = RateLimiter(RateBudget(100, 10_000), clock)
    limiter.pause(5.0)
    assert limiter.acquire(1) == 5.0


def test_budget_validation():
    with pytest.raises(ConfigError) as info:
        RateBudget(0, -1)
    assert len(info.value.problems) == 2


def test_token_estimate():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2


def test_dispatch_two_per_minute_budget():
    clock = VirtualClock()
    config = fast_config(chunk_count=1)
    plan = plan_batches(texts(50), config)
    result = dispatch(plan, MockProvider(), RateBudget(2, 90_000), config, clock)
    assert len(result.responses) == 5
    assert not result.failed
    assert brute_force_window_violations(result.send_log, 60.0, 2, 90_000) == 0
    assert clock.now() >= 120.0


def test_dispatch_two_hundred_batches_within_budget():
    clock = VirtualClock()
    config = fast_config(chunk_count=15, worker_count=75)
    plan = plan_batches([f"Sentence {i} on [proteome] scale." * 3 for i in range(2000)], config)
    assert len(plan.batches) == 200
    result = dispatch(plan, MockProvider(), RateBudget(3500, 90_000), config, clock)
    assert not result.failed
    assert max_in_window(result.send_log)[1] <= 90_000
    assert brute_force_window_violations(result.send_log, 60.0, 3500, 90_000) == 0


# --- retries and failures ---------------------------------------------------------


def ok_reply(n):
    return "\n".join(f"{i}. simple {i}" for i in range(1, n + 1))


def test_transient_failures_are_retried():
    plan = plan_batches(texts(10), fast_config())
    provider = ScriptedProvider([ProviderTransportError("down"), ProviderHTTPError(500), ok_reply(10)])
    result = dispatch(plan, provider, RateBudget(), fast_config(), VirtualClock())
    response = result.responses[0]
    assert response.status == "ok"
    assert response.attempts == 3
    assert response.retries == 2
    assert result.provider_calls == 3
    assert len(response.errors) == 2


def test_wrong_item_count_triggers_one_retry():
    plan = plan_batches(texts(10), fast_config())
    provider = ScriptedProvider([ok_reply(11), ok_reply(10)])
    result = dispatch(plan, provider, RateBudget(), fast_config(), VirtualClock())
    response = result.responses[0]
    assert response.status == "ok"
    assert response.retries == 1
    assert "ListParseError" in response.errors[0]


def test_backoff_waits_on_the_clock():
    clock = VirtualClock()
    config = fast_config(backoff_base_s=2.0, backoff_factor=2.0)
    plan = plan_batches(texts(10), config)
    provider = ScriptedProvider([ProviderTransportError("x"), ProviderTransportError("x"), ok_reply(10)])
    result = dispatch(plan, provider, RateBudget(), config, clock)
    first, second, third = result.responses[0].send_times
    assert second - first >= 2.0
    assert third - second >= 4.0


def test_rate_limit_reply_pauses_the_limiter():
    clock = VirtualClock()
    plan = plan_batches(texts(10), fast_config())
    provider = ScriptedProvider([ProviderRateLimitError(retry_after=20.0), ok_reply(10)])
    result = dispatch(plan, provider, RateBudget(), fast_config(), clock)
    times = result.responses[0].send_times
    assert times[1] - times[0] >= 20.0


def test_exhausted_retries_mark_the_batch_failed():
    config = fast_config(max_retries=2)
    plan = plan_batches(texts(20), config)
    provider = ScriptedProvider([ProviderTransportError("x")] * 3 + [ok_reply(10)])
    result = dispatch(plan, provider, RateBudget(), config, VirtualClock())
    assert [r.status for r in result.responses] == ["failed", "ok"]
    assert result.failed[0].attempts == 3
    assert all("batch 0" in e for e in result.failed[0].errors)


def test_oversized_batch_is_a_config_error():
    config = fast_config(response_token_cap=1000)
    plan = plan_batches(texts(10), config)
    with pytest.raises(ConfigError):
        dispatch(plan, MockProvider(), RateBudget(100, 1100), config, VirtualClock())


# --- providers --------------------------------------------------------------------


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_live_provider_on_closed_port_reports_transport_error():
    endpoint = f"http://127.0.0.1:{free_port()}/v1/chat/completions"
    provider = OpenAIChatProvider(endpoint, "key", timeout_s=2.0)
    with pytest.raises(ProviderTransportError):
        provider.complete("s", "1. a", "model", 10)
    config = fast_config(max_retries=1)
    plan = plan_batches(texts(10), config)
    result = dispatch(plan, provider, RateBudget(), config, VirtualClock())
    assert result.failed[0].batch_id == 0
    assert "ProviderTransportError" in result.failed[0].errors[0]


def mock_transport(status, body, headers=None, seen=None):
    def handler(request):
        if seen is not None:
            seen.append(request)
        return httpx.Response(status, json=body, headers=headers or {})

    return httpx.Client(transport=httpx.MockTransport(handler))


def test_live_provider_request_and_reply():
    seen = []
    client = mock_transport(200, {"choices": [{"message": {"content": "1. ok"}}]}, seen=seen)
    provider = OpenAIChatProvider("https://example.test/v1/chat/completions", "sk-test", client=client)
    assert provider.complete("system", "1. a", "gpt-x", 64) == "1. ok"
    payload = json.loads(seen[0].content)
    assert payload["model"] == "gpt-x"
    assert payload["max_tokens"] == 64
    assert [m["role"] for m in payload["messages"]] == ["system", "user"]
    assert "temperature" not in payload
    assert seen[0].headers["authorization"] == "Bearer sk-test"


def test_live_provider_error_mapping():
    url = "https://example.test/"
    limited = OpenAIChatProvider(url, client=mock_transport(429, {}, {"retry-after": "7"}))
    with pytest.raises(ProviderRateLimitError) as info:
        limited.complete("s", "u", "m", 1)
    assert info.value.retry_after == 7.0
    with pytest.raises(ProviderHTTPError) as info:
        OpenAIChatProvider(url, client=mock_transport(503, {})).complete("s", "u", "m", 1)
    assert info.value.status == 503
    with pytest.raises(EmptyResponseError):
        OpenAIChatProvider(url, client=mock_transport(200, {"choices": []})).complete("s", "u", "m", 1)
    empty = {"choices": [{"message": {"content": "  "}}]}
    with pytest.raises(EmptyResponseError):
        OpenAIChatProvider(url, client=mock_transport(200, empty)).complete("s", "u", "m", 1)


@pytest.mark.parametrize("style", ["enumerated", "dashed", "blankline"])
def test_mock_styles_parse(style):
    config = fast_config()
    plan = plan_batches(texts(20), config)
    result = dispatch(plan, MockProvider(style=style), RateBudget(), config, VirtualClock())
    assert {r.parse_method for r in result.responses} == {style}
    assert plan.realign({r.batch_id: r.items for r in result.responses}) == texts(20)


# --- checkpoints and resume -------------------------------------------------------


class CrashAfter:
    """Delegates to a provider, then raises KeyboardInterrupt once ``limit`` calls were made."""

    def __init__(self, inner, limit):
        self.inner, self.limit, self.calls = inner, limit, 0

    def complete(self, *args):
        self.calls += 1
        if self.calls > self.limit:
            raise KeyboardInterrupt
        return self.inner.complete(*args)


def test_crash_and_resume_sends_only_missing_batches(tmp_path):
    config = fast_config(chunk_count=3, worker_count=1)
    plan = plan_batches(texts(60), config)
    crashing = CrashAfter(MockProvider(), 4)
    with pytest.raises(KeyboardInterrupt):
        dispatch(plan, crashing, RateBudget(), config, VirtualClock(), tmp_path)
    assert len(load_checkpoints(tmp_path)) == 4

    fresh = MockProvider()
    result = dispatch(plan, fresh, RateBudget(), config, VirtualClock(), tmp_path, resume=True)
    assert fresh.calls == 2
    assert sum(r.resumed for r in result.responses) == 4
    assert not result.failed
    assert len(load_checkpoints(tmp_path)) == 6


def test_resume_ignores_torn_lines_and_stale_prompts(tmp_path):
    config = fast_config(chunk_count=1)
    plan = plan_batches(texts(20), config)
    dispatch(plan, MockProvider(), RateBudget(), config, VirtualClock(), tmp_path)
    path = checkpoint_path(tmp_path, 0)
    lines = path.read_text(encoding="utf-8").splitlines()
    entry = json.loads(lines[0])
    entry["prompt_sha256"] = "0" * 64
    path.write_text(json.dumps(entry) + "\n" + lines[1] + "\n" + '{"batch_id": 5, "raw', encoding="utf-8")

    provider = MockProvider()
    result = dispatch(plan, provider, RateBudget(), config, VirtualClock(), tmp_path, resume=True)
    assert provider.calls == 1
    assert not result.failed
    # the torn tail is left behind but later lines still parse
    assert {0, 1} <= set(load_checkpoints(tmp_path))


def test_fresh_run_discards_old_checkpoints(tmp_path):
    config = fast_config(chunk_count=1)
    plan = plan_batches(texts(20), config)
    dispatch(plan, MockProvider(), RateBudget(), config, VirtualClock(), tmp_path)
    provider = MockProvider()
    dispatch(plan, provider, RateBudget(), config, VirtualClock(), tmp_path)
    assert provider.calls == 2
    assert len(checkpoint_path(tmp_path, 0).read_text().splitlines()) == 2


def test_replay_provider_reproduces_a_run(tmp_path):
    config = fast_config()
    plan = plan_batches(texts(30), config)
    first = dispatch(plan, MockProvider(lambda t: t.upper()), RateBudget(), config, VirtualClock(), tmp_path / "a")
    replay = ReplayProvider.from_checkpoints([tmp_path / "a"])
    second = dispatch(plan, replay, RateBudget(), config, VirtualClock())
    assert [r.raw for r in first.responses] == [r.raw for r in second.responses]
    assert replay.calls == 3
