"""Prompt construction for batched simplification requests."""

from __future__ import annotations

import hashlib

PROMPT_TEMPLATE = (
    "You are given {count} {texts}, TREAT THEM SEPARATELY.\n"
    "Complex technical or scientific terms are indicated by square brackets "
    "(e.g. [convolutional neural network]).\n"
    "For each text, replace or explain the terms in square brackets to make it "
    "understandable to non-experts and to simplify for non-expert readers.\n"
    "Make sure that you return exactly one enumerated list of {count} simplified "
    "{texts} and that all terms in square brackets are simplified or explained!"
)


def system_prompt(count: int) -> str:
    return PROMPT_TEMPLATE.format(count=count, texts="text" if count == 1 else "texts")


def user_message(items) -> str:
    # a line break inside an item would split it into two list entries
    return "\n".join(f"{i}. {' '.join(text.split())}" for i, text in enumerate(items, start=1))


def build_prompt(batch) -> tuple[str, str]:
    """System and user messages for a batch; query texts are never sent."""
    if not batch.items:
        raise ValueError(f"batch {batch.batch_id} is empty")
    return system_prompt(len(batch.items)), user_message(batch.items)


def prompt_digest(system: str, user: str) -> str:
    return hashlib.sha256(f"{system}\x00{user}".encode("utf-8")).hexdigest()
