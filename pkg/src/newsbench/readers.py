"""Deterministic built-in readers for harness testing and offline demos.

Each builder returns a CallableTransport that inspects the prompt it is
handed, exactly like a real model would:

  perfect   answers the gold option (or gold span) for whichever item's
            question appears in the prompt
  abstain   never commits to an answer
  context   answers correctly only when the gold article's text is present
            in the prompt, otherwise abstains; forces the oracle >=
            retrieval >= no-context ordering by construction
"""

from __future__ import annotations

from .llm_gateway import CallableTransport
from .versioning import DatasetSnapshot

ABSTAIN_TEXT = "I don't know."

BUILTIN_READERS = ("mock-perfect", "mock-abstain", "mock-context")


def _item_lookup(snapshot: DatasetSnapshot):
    """Match prompts back to items by their question text, longest first so
    a question that embeds another question cannot shadow it."""
    mcq = sorted(snapshot.items, key=lambda i: len(i.question), reverse=True)
    open_ended = {o.item_id: o for o in snapshot.open_ended}

    def find(prompt: str):
        for item in mcq:
            if f"Question: {item.question}." in prompt:
                return item, open_ended.get(item.item_id)
        return None, None

    return find


def _is_open_ended(prompt: str) -> bool:
    return "\nA. " not in prompt


def perfect_reader(snapshot: DatasetSnapshot) -> CallableTransport:
    find = _item_lookup(snapshot)

    def respond(model, prompt: str) -> str:
        item, open_item = find(prompt)
        if item is None:
            return ABSTAIN_TEXT
        if _is_open_ended(prompt):
            return open_item.answer_span if open_item else item.ground_truth
        return f"{item.gold_letter}. {item.ground_truth}"

    return CallableTransport(respond)


def abstain_reader() -> CallableTransport:
    return CallableTransport(lambda model, prompt: ABSTAIN_TEXT)


def context_reader(snapshot: DatasetSnapshot) -> CallableTransport:
    find = _item_lookup(snapshot)
    bodies = {a.id: a.body for a in snapshot.articles}

    def respond(model, prompt: str) -> str:
        item, open_item = find(prompt)
        if item is None:
            return ABSTAIN_TEXT
        body = bodies.get(item.article_id, "")
        if not body or body not in prompt:
            return ABSTAIN_TEXT
        if _is_open_ended(prompt):
            return open_item.answer_span if open_item else item.ground_truth
        return f"{item.gold_letter}. {item.ground_truth}"

    return CallableTransport(respond)


def builtin_reader(name: str, snapshot: DatasetSnapshot) -> CallableTransport:
    if name == "mock-perfect":
        return perfect_reader(snapshot)
    if name == "mock-abstain":
        return abstain_reader()
    if name == "mock-context":
        return context_reader(snapshot)
    raise ValueError(f"unknown builtin reader {name!r}")
