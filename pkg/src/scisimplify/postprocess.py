"""Turning raw model output into one clean simplification per source sentence."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from .complexity import strip_brackets
from .readability import sentence_spans

DEFAULT_PREFIX_PATTERNS = ("aaron carroll: ",)

_ENUMERATED = re.compile(r"^\s*(\d+)[.)](?:\s+|$)(.*)$")
_BULLETED = re.compile(r"^\s*[-*•–]\s+(.*)$")


class ListParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class SimplificationResult:
    snt_id: str
    simplified_snt: str = ""
    parse_method: str | None = None
    filters_applied: set[str] = field(default_factory=set)
    failed: bool = False

    def __post_init__(self):
        if self.failed and self.simplified_snt:
            raise ValueError("failed results carry no text")
        if not self.failed and ("[" in self.simplified_snt or "]" in self.simplified_snt):
            raise ValueError("successful results must be bracket-free")


def _marker_items(lines: Sequence[str], pattern: re.Pattern, numbered: bool) -> list[str]:
    items: list[list[str]] = []
    for line in lines:
        match = pattern.match(line)
        if match:
            if numbered and int(match.group(1)) != len(items) + 1:
                return []
            items.append([match.group(match.lastindex)])
        elif items and line.strip():
            items[-1].append(line.strip())
        # text before the first marker is a preamble and is dropped
    return [" ".join(part.strip() for part in item if part.strip()) for item in items]


def _enumerated(raw: str) -> list[str]:
    return _marker_items(raw.splitlines(), _ENUMERATED, numbered=True)


def _dashed(raw: str) -> list[str]:
    return _marker_items(raw.splitlines(), _BULLETED, numbered=False)


def _blankline(raw: str) -> list[str]:
    blocks = re.split(r"\n\s*\n", raw.strip())
    return [" ".join(line.strip() for line in b.splitlines() if line.strip()) for b in blocks if b.strip()]


RECOGNIZERS = (("enumerated", _enumerated), ("dashed", _dashed), ("blankline", _blankline))


def parse_list_response_with_method(raw: str, expected_count: int) -> tuple[list[str], str]:
    """Split a list-shaped reply into exactly ``expected_count`` items.

    Formats are tried in order: numbered ("1." / "1)"), bulleted ("-", "*",
    "•"), blank-line separated paragraphs, and finally the whole reply when a
    single item is expected. The first format producing the expected number of
    items wins.
    """
    if expected_count < 1:
        raise ValueError("expected_count must be at least 1")
    for name, recognizer in RECOGNIZERS:
        items = recognizer(raw)
        if len(items) == expected_count:
            return items, name
    if expected_count == 1 and raw.strip():
        lines = [line.strip() for line in raw.strip().splitlines() if line.strip()]
        return [" ".join(lines)], "single"
    raise ListParseError(f"could not split reply into {expected_count} items", raw)


def parse_list_response(raw: str, expected_count: int) -> list[str]:
    return parse_list_response_with_method(raw, expected_count)[0]


def remove_brackets(text: str) -> str:
    return strip_brackets(text)


def remove_hallucination_prefixes(text: str, patterns: Sequence[str] = DEFAULT_PREFIX_PATTERNS) -> str:
    """Strip known hallucinated lead-ins (matched case-insensitively) until none is left."""
    patterns = [p for p in patterns if p]
    changed = True
    while changed:
        changed = False
        for pattern in patterns:
            if text[: len(pattern)].lower() == pattern.lower():
                text = text[len(pattern):]
                changed = True
                break
    return text


def select_shortest_sentence(text: str) -> str:
    spans = sentence_spans(text)
    if not spans:
        return text.strip()
    start, end = min(spans, key=lambda s: s[1] - s[0])
    return text[start:end]


def clean_item(
    snt_id: str,
    text: str,
    parse_method: str | None = None,
    prefix_patterns: Sequence[str] = DEFAULT_PREFIX_PATTERNS,
) -> SimplificationResult:
    filters = set()
    cleaned = remove_brackets(text)
    if cleaned != text:
        filters.add("brackets")
    stripped = remove_hallucination_prefixes(cleaned, prefix_patterns)
    if stripped != cleaned:
        filters.add("prefix")
    return SimplificationResult(snt_id, stripped.strip(), parse_method, filters)
